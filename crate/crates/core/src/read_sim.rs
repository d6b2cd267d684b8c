//! Transaction-level reads of a bank under mismatch.
//!
//! A read releases the bitlines of the active array, lets every column
//! discharge through its accessed and idle cells for `c_R·T_SA`, then fires
//! one sense amplifier per column. There is no leakage measurement on this
//! path; timing comes entirely from the calibrated lookup row.

use rayon::prelude::*;

use crate::calibration::LookupRow;
use crate::column::{ColumnConfig, DataPattern};
use crate::discharge::Discharge;
use crate::error::{Error, Result};
use crate::peripherals::{sosa_sample, Timing};
use crate::variation::{fill_vth, sample_offset, VariationModel};

pub const ARRAYS: usize = 4;
pub const COLUMNS: usize = 64;
pub const DEFAULT_ROWS: usize = 256;

/// Stored data of a bank of [`ARRAYS`] arrays, each `rows × 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankState {
    rows: usize,
    /// `words[array][row]`, bit `c` is column `c`.
    words: Vec<Vec<u64>>,
    active_array: usize,
}

impl BankState {
    /// All-zero bank.
    pub fn new(rows: usize) -> Result<Self> {
        if rows == 0 || rows > crate::column::MAX_DEPTH {
            return Err(Error::config(
                "column.depth",
                format!("{rows} rows not supported"),
            ));
        }
        Ok(BankState {
            rows,
            words: vec![vec![0; rows]; ARRAYS],
            active_array: 0,
        })
    }

    pub fn from_fn(rows: usize, f: impl Fn(usize, usize) -> u64) -> Result<Self> {
        let mut b = BankState::new(rows)?;
        for (a, arr) in b.words.iter_mut().enumerate() {
            for (r, w) in arr.iter_mut().enumerate() {
                *w = f(a, r);
            }
        }
        Ok(b)
    }

    /// Alternating bits, phase flipped on every row.
    pub fn checkerboard(rows: usize) -> Result<Self> {
        const A: u64 = 0xAAAA_AAAA_AAAA_AAAA;
        BankState::from_fn(rows, |_, r| if r % 2 == 0 { A } else { !A })
    }

    /// `row` stores `accessed` in every column, all other rows store `idle`.
    pub fn worst_case(rows: usize, row: usize, accessed: bool, idle: bool) -> Result<Self> {
        let word = |b: bool| if b { u64::MAX } else { 0 };
        BankState::from_fn(
            rows,
            |_, r| if r == row { word(accessed) } else { word(idle) },
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn active_array(&self) -> usize {
        self.active_array
    }

    pub fn activate(&mut self, array: usize) -> Result<()> {
        if array >= ARRAYS {
            return Err(Error::Usage(format!(
                "array {array} out of range 0..{ARRAYS}"
            )));
        }
        self.active_array = array;
        Ok(())
    }

    pub fn word(&self, array: usize, row: usize) -> u64 {
        self.words[array][row]
    }

    /// Setup-time write; there is no write timing model.
    pub fn write(&mut self, array: usize, row: usize, word: u64) -> Result<()> {
        self.check(array, row)?;
        self.words[array][row] = word;
        Ok(())
    }

    pub fn column_bits(&self, array: usize, col: usize) -> Vec<bool> {
        self.words[array]
            .iter()
            .map(|w| (w >> col) & 1 == 1)
            .collect()
    }

    /// Global cell index; the rows of one column are contiguous.
    pub fn cell_index(&self, array: usize, col: usize, row: usize) -> u64 {
        ((array * COLUMNS + col) * self.rows + row) as u64
    }

    /// Index of the sense amplifier serving `col` of `array`.
    pub fn sense_index(array: usize, col: usize) -> u64 {
        (array * COLUMNS + col) as u64
    }

    pub fn check(&self, array: usize, row: usize) -> Result<()> {
        if array >= ARRAYS {
            return Err(Error::Usage(format!(
                "array {array} out of range 0..{ARRAYS}"
            )));
        }
        if row >= self.rows {
            return Err(Error::Usage(format!(
                "row {row} out of range 0..{}",
                self.rows
            )));
        }
        Ok(())
    }
}

/// Read delay `D = T_RWL + T_RBL + T_SA` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delay {
    pub t_rwl: f64,
    pub t_rbl: f64,
    pub t_sa: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadResult {
    pub array: usize,
    pub row: usize,
    pub word: u64,
    pub expected: u64,
    /// Bit `c` set when column `c` was sensed correctly.
    pub correct: u64,
    pub delay: Delay,
}

impl ReadResult {
    pub fn bit_errors(&self) -> u32 {
        (!self.correct).count_ones()
    }

    /// Columns storing '1' that were sensed as '0'.
    pub fn read_one_errors(&self) -> u32 {
        (self.expected & !self.word).count_ones()
    }

    /// Columns storing '0' that were sensed as '1'.
    pub fn read_zero_errors(&self) -> u32 {
        (!self.expected & self.word).count_ones()
    }
}

/// Everything a read needs: the column electrical model, mismatch, the
/// clock and the calibrated sensing count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadSetup {
    pub cfg: ColumnConfig,
    pub model: VariationModel,
    pub timing: Timing,
    pub c_r: u32,
    /// Word-line rise time as a multiple of `t_ck`.
    pub t_rwl_factor: f64,
}

pub const DEFAULT_T_RWL_FACTOR: f64 = 0.5;

impl ReadSetup {
    /// Refuses rows without a valid `c_R`: the supply is below `V_DDMIN`.
    pub fn from_row(
        cfg: ColumnConfig,
        model: VariationModel,
        timing: Timing,
        row: &LookupRow,
        t_rwl_factor: f64,
    ) -> Result<Self> {
        let c_r = row.c_r.ok_or_else(|| {
            Error::Usage(format!(
                "no valid sensing count at {} V: supply is below VDDMIN",
                row.vdd
            ))
        })?;
        if (row.vdd - cfg.env.vdd).abs() > 5e-4 {
            return Err(Error::Usage(format!(
                "lookup row is for {} V but the column runs at {} V",
                row.vdd, cfg.env.vdd
            )));
        }
        ReadSetup::forced(cfg, model, timing, c_r, t_rwl_factor)
    }

    /// Uses `c_r` as given, without checking it against a lookup table.
    pub fn forced(
        cfg: ColumnConfig,
        model: VariationModel,
        timing: Timing,
        c_r: u32,
        t_rwl_factor: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        if c_r == 0 {
            return Err(Error::Usage("sensing count must be at least 1".into()));
        }
        if !(t_rwl_factor >= 0.0) {
            return Err(Error::config("read.t_rwl_factor", "must be >= 0"));
        }
        Ok(ReadSetup {
            cfg,
            model,
            timing,
            c_r,
            t_rwl_factor,
        })
    }

    pub fn t_rbl(&self) -> f64 {
        f64::from(self.c_r) * self.timing.t_sa
    }

    pub fn delay(&self) -> Delay {
        let t_rwl = self.t_rwl_factor * self.timing.t_ck;
        let t_rbl = self.t_rbl();
        let t_sa = self.timing.t_sa;
        Delay {
            t_rwl,
            t_rbl,
            t_sa,
            total: t_rwl + t_rbl + t_sa,
        }
    }
}

/// Reads `row` of the active array in Monte Carlo trial `trial`.
pub fn simulate_read(
    bank: &BankState,
    row: usize,
    setup: &ReadSetup,
    trial: u64,
) -> Result<ReadResult> {
    let array = bank.active_array();
    bank.check(array, row)?;
    if bank.rows() != setup.cfg.depth {
        return Err(Error::config(
            "column.depth",
            format!(
                "bank has {} rows, column model {}",
                bank.rows(),
                setup.cfg.depth
            ),
        ));
    }
    let cfg = &setup.cfg;
    let model = &setup.model;
    let rng = model.rng();
    let t_sample = setup.t_rbl();
    let sensed = (0..COLUMNS)
        .into_par_iter()
        .map(|col| -> Result<bool> {
            let pattern = DataPattern::new(bank.column_bits(array, col), Some(row))?;
            let mut vth = vec![0.0; bank.rows()];
            fill_vth(
                model,
                &rng,
                cfg.params.vth0,
                trial,
                bank.cell_index(array, col, 0),
                &mut vth,
            );
            let offset = sample_offset(model, BankState::sense_index(array, col), trial);
            let d = Discharge::for_column(cfg, &pattern, Some(&vth))?;
            if d.currents().is_zero() {
                return Ok(sosa_sample(cfg.env.vdd, cfg.v_ref, offset));
            }
            let mut s = d.stepper(d.max_step())?;
            // The comparator reads '0' once V + offset < VREF.
            let fell = s
                .advance_until_below(cfg.v_ref - offset, t_sample)
                .is_some();
            Ok(!fell)
        })
        .collect::<Result<Vec<bool>>>()?;
    let word = sensed
        .iter()
        .enumerate()
        .fold(0u64, |w, (c, &b)| w | (u64::from(b) << c));
    let expected = bank.word(array, row);
    Ok(ReadResult {
        array,
        row,
        word,
        expected,
        correct: !(word ^ expected),
        delay: setup.delay(),
    })
}

/// One line of a read trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub array: usize,
    pub row: usize,
    pub expected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub reads: usize,
    pub bit_errors: u64,
    pub mean_delay: f64,
    pub max_delay: f64,
    pub results: Vec<ReadResult>,
}

/// Runs `trace` in order; read `k` uses Monte Carlo trial `k`, so each read
/// is reproducible on its own. Errors count mismatches against the trace's
/// expected words.
pub fn simulate_sequence(
    bank: &BankState,
    trace: &[Access],
    setup: &ReadSetup,
) -> Result<SequenceReport> {
    for a in trace {
        bank.check(a.array, a.row)?;
    }
    let mut results = Vec::with_capacity(trace.len());
    let mut view = bank.clone();
    for (k, a) in trace.iter().enumerate() {
        view.activate(a.array)?;
        let mut r = simulate_read(&view, a.row, setup, k as u64)?;
        r.expected = a.expected;
        r.correct = !(r.word ^ a.expected);
        results.push(r);
    }
    let bit_errors = results.iter().map(|r| u64::from(r.bit_errors())).sum();
    let (mean_delay, max_delay) = if results.is_empty() {
        (0.0, 0.0)
    } else {
        let sum: f64 = results.iter().map(|r| r.delay.total).sum();
        let max = results.iter().map(|r| r.delay.total).fold(0.0, f64::max);
        (sum / results.len() as f64, max)
    };
    Ok(SequenceReport {
        reads: results.len(),
        bit_errors,
        mean_delay,
        max_delay,
        results,
    })
}

/// Fractions of the total read delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayShares {
    pub rwl: f64,
    pub rbl: f64,
    pub sa: f64,
}

pub fn delay_decomposition(results: &[ReadResult]) -> Result<DelayShares> {
    if results.is_empty() {
        return Err(Error::Usage(
            "delay decomposition of an empty result set".into(),
        ));
    }
    let (mut rwl, mut rbl, mut sa, mut total) = (0.0, 0.0, 0.0, 0.0);
    for r in results {
        rwl += r.delay.t_rwl;
        rbl += r.delay.t_rbl;
        sa += r.delay.t_sa;
        total += r.delay.total;
    }
    Ok(DelayShares {
        rwl: rwl / total,
        rbl: rbl / total,
        sa: sa / total,
    })
}

/// Parses `R <array> <row> <expected-hex-word>` lines. Blank lines and `#`
/// comments are skipped.
pub fn parse_trace(text: &str, path: &str) -> Result<Vec<Access>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_string(),
            line: n + 1,
            reason,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "R" {
            return Err(err(format!(
                "expected `R <array> <row> <hex>`, got `{line}`"
            )));
        }
        let array = f[1].parse().map_err(|e| err(format!("array: {e}")))?;
        let row = f[2].parse().map_err(|e| err(format!("row: {e}")))?;
        let hex = f[3].trim_start_matches("0x");
        let expected = u64::from_str_radix(hex, 16).map_err(|e| err(format!("word: {e}")))?;
        out.push(Access {
            array,
            row,
            expected,
        });
    }
    Ok(out)
}

/// One `R` line per access.
pub fn format_trace(trace: &[Access]) -> String {
    trace
        .iter()
        .map(|a| format!("R {} {} {:016x}\n", a.array, a.row, a.expected))
        .collect()
}

/// Reads every row of `array` expecting the stored data.
pub fn full_array_trace(bank: &BankState, array: usize) -> Vec<Access> {
    (0..bank.rows())
        .map(|row| Access {
            array,
            row,
            expected: bank.word(array, row),
        })
        .collect()
}
