//! Test-mode leakage measurement and the `V_DD → (c_L, c_R)` lookup table.
//!
//! In test mode every row of the bank holds '0' and no word line is raised,
//! so each bitline discharges by leakage alone. The sense amplifiers fire
//! once per `T_SA` and a counter records how many activations pass before
//! the first column flips; that count `c_L` bounds the time any later read
//! may wait before sensing. The read count `c_R` is the smallest one that
//! still covers the slowest '0' read with margin.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::column::{sensing_window, ColumnConfig, DataPattern, SensingWindow};
use crate::discharge::Discharge;
use crate::error::{Error, Result};
use crate::peripherals::{timing_at, ReplicaConfig, SosaModel, Timing};
use crate::read_sim::{BankState, ARRAYS, COLUMNS};
use crate::variation::{fill_vth, sample_offset, VariationModel};

/// Ten-bit leakage counter.
pub const DEFAULT_COUNTER_MAX: u32 = 1023;
pub const DEFAULT_MARGIN: f64 = 1.2;
/// Calibration instances draw from trial ids above this, away from reads.
pub const CALIBRATION_TRIAL_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibSettings {
    pub counter_max: u32,
    pub margin: f64,
}

impl Default for CalibSettings {
    fn default() -> Self {
        CalibSettings {
            counter_max: DEFAULT_COUNTER_MAX,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl CalibSettings {
    pub fn validate(&self) -> Result<()> {
        if self.counter_max == 0 {
            return Err(Error::config("calib.counter_max", "must be >= 1"));
        }
        if !(self.margin >= 1.0 && self.margin.is_finite()) {
            return Err(Error::config("calib.margin", "must be >= 1"));
        }
        Ok(())
    }
}

/// Counter value at the first flip in the bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageCount {
    pub c_l: u32,
    /// No column flipped within `counter_max` activations.
    pub saturated: bool,
    /// Earliest flip time over the bank (s), `None` when saturated.
    pub t_flip: Option<f64>,
}

/// Activation index that first samples a bitline already below threshold:
/// `(c - 1)·t_sa < t_flip <= c·t_sa`.
pub fn count_for(t_flip: f64, t_sa: f64) -> u32 {
    let c = (t_flip / t_sa).ceil().max(1.0);
    if c >= f64::from(u32::MAX) {
        u32::MAX
    } else {
        c as u32
    }
}

/// Earliest time any column of `bank` flips its amplifier, looking no
/// further than `t_limit`. Instance `instance` picks the mismatch draw.
pub fn first_flip(
    bank: &BankState,
    cfg: &ColumnConfig,
    model: &VariationModel,
    instance: u64,
    t_limit: f64,
) -> Result<Option<f64>> {
    if bank.rows() != cfg.depth {
        return Err(Error::config(
            "column.depth",
            format!("bank has {} rows, column model {}", bank.rows(), cfg.depth),
        ));
    }
    let rng = model.rng();
    let trial = CALIBRATION_TRIAL_BASE + instance;
    let flips = (0..ARRAYS * COLUMNS)
        .into_par_iter()
        .map(|k| -> Result<Option<f64>> {
            let (array, col) = (k / COLUMNS, k % COLUMNS);
            let pattern = DataPattern::new(bank.column_bits(array, col), None)?;
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
            let level = cfg.v_ref - offset;
            if level >= cfg.env.vdd {
                return Ok(Some(0.0));
            }
            let d = Discharge::for_column(cfg, &pattern, Some(&vth))?;
            if d.currents().is_zero() || level <= 0.0 {
                return Ok(None);
            }
            let mut s = d.stepper(d.max_step())?;
            Ok(s.advance_until_below(level, t_limit))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(flips.into_iter().flatten().reduce(f64::min))
}

/// Runs the test-mode count on `model.trials` bank instances and keeps the
/// median (lower median for an even count).
pub fn measure_cl(
    bank: &BankState,
    cfg: &ColumnConfig,
    model: &VariationModel,
    t_sa: f64,
    settings: &CalibSettings,
) -> Result<LeakageCount> {
    settings.validate()?;
    model.validate()?;
    if !(t_sa > 0.0) {
        return Err(Error::domain("t_sa", format!("{t_sa} s is not positive")));
    }
    let t_limit = f64::from(settings.counter_max) * t_sa;
    let mut flips = Vec::with_capacity(model.trials);
    for i in 0..model.trials {
        flips.push(first_flip(bank, cfg, model, i as u64, t_limit)?);
    }
    // None sorts as +inf.
    let key = |f: &Option<f64>| f.unwrap_or(f64::INFINITY);
    flips.sort_by(|a, b| key(a).total_cmp(&key(b)));
    let median = flips[(flips.len() - 1) / 2];
    Ok(match median {
        Some(t) if count_for(t, t_sa) <= settings.counter_max => LeakageCount {
            c_l: count_for(t, t_sa),
            saturated: false,
            t_flip: Some(t),
        },
        _ => LeakageCount {
            c_l: settings.counter_max,
            saturated: true,
            t_flip: None,
        },
    })
}

/// Smallest count whose sensing time covers `margin·t_r0_max` while staying
/// strictly below `c_l·t_sa`. `None` when no such count exists.
pub fn select_cr(t_r0_max: f64, t_sa: f64, c_l: u32, margin: f64) -> Option<u32> {
    let need = margin * t_r0_max;
    let mut c = (need / t_sa).ceil().max(1.0);
    if (c - 1.0) >= 1.0 && (c - 1.0) * t_sa >= need {
        c -= 1.0;
    }
    while c * t_sa < need {
        c += 1.0;
    }
    if c >= f64::from(c_l) {
        return None;
    }
    Some(c as u32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupRow {
    pub vdd: f64,
    pub c_l: u32,
    pub saturated: bool,
    pub c_r: Option<u32>,
    /// Sensing time over the shortest leakage flip. For rows without a
    /// valid count this is the fraction the slowest read would need.
    pub beta: f64,
}

impl LookupRow {
    pub fn is_valid(&self) -> bool {
        self.c_r.is_some()
    }
}

/// Per-supply detail kept beside a lookup row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowDetail {
    pub timing: Timing,
    pub window: SensingWindow,
    pub count: LeakageCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableHeader {
    pub config_sha256: String,
    pub seed: u64,
    pub temperature: f64,
    pub counter_max: u32,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub header: TableHeader,
    /// Sorted by ascending supply.
    pub rows: Vec<LookupRow>,
}

impl LookupTable {
    /// Lowest supply with a valid count.
    pub fn vdd_min(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.is_valid()).map(|r| r.vdd)
    }

    /// Row for `vdd` within half a millivolt.
    pub fn row_for(&self, vdd: f64) -> Option<&LookupRow> {
        self.rows.iter().find(|r| (r.vdd - vdd).abs() <= 5e-4)
    }

    pub fn to_tsv(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "# leaksense lookup table");
        let _ = writeln!(s, "# config_sha256\t{}", h.config_sha256);
        let _ = writeln!(s, "# seed\t{}", h.seed);
        let _ = writeln!(s, "# temperature_K\t{:.9e}", h.temperature);
        let _ = writeln!(s, "# counter_max\t{}", h.counter_max);
        let _ = writeln!(s, "# margin\t{:.9e}", h.margin);
        s.push_str("vdd_mV\tc_l\tc_r\tbeta_ppm\tsaturated\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                (r.vdd * 1e3).round() as i64,
                r.c_l,
                r.c_r.map_or(-1, i64::from),
                (r.beta * 1e6).round() as i64,
                u8::from(r.saturated)
            );
        }
        s
    }

    pub fn from_tsv(text: &str, path: &str) -> Result<Self> {
        let mut hash = None;
        let mut seed = None;
        let mut temperature = None;
        let mut counter_max = None;
        let mut margin = None;
        let mut rows = Vec::new();
        let mut seen_columns = false;
        for (n, line) in text.lines().enumerate() {
            let err = |reason: String| Error::Parse {
                path: path.to_string(),
                line: n + 1,
                reason,
            };
            if let Some(c) = line.strip_prefix('#') {
                let mut f = c.trim().splitn(2, '\t');
                let (k, v) = (f.next().unwrap_or(""), f.next().map(str::trim));
                let Some(v) = v else { continue };
                match k {
                    "config_sha256" => hash = Some(v.to_string()),
                    "seed" => seed = Some(v.parse().map_err(|e| err(format!("seed: {e}")))?),
                    "temperature_K" => {
                        temperature = Some(v.parse().map_err(|e| err(format!("temperature: {e}")))?)
                    }
                    "counter_max" => {
                        counter_max = Some(v.parse().map_err(|e| err(format!("counter_max: {e}")))?)
                    }
                    "margin" => margin = Some(v.parse().map_err(|e| err(format!("margin: {e}")))?),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_columns {
                if line.trim() != "vdd_mV\tc_l\tc_r\tbeta_ppm\tsaturated" {
                    return Err(err(format!("unexpected column header `{line}`")));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", f.len())));
            }
            let mv: i64 = f[0].parse().map_err(|e| err(format!("vdd_mV: {e}")))?;
            let c_l: u32 = f[1].parse().map_err(|e| err(format!("c_l: {e}")))?;
            let c_r: i64 = f[2].parse().map_err(|e| err(format!("c_r: {e}")))?;
            let ppm: i64 = f[3].parse().map_err(|e| err(format!("beta_ppm: {e}")))?;
            let sat = match f[4] {
                "0" => false,
                "1" => true,
                o => return Err(err(format!("saturated must be 0 or 1, got `{o}`"))),
            };
            let c_r = match c_r {
                -1 => None,
                c if c >= 1 && c <= i64::from(u32::MAX) => Some(c as u32),
                c => return Err(err(format!("c_r {c} out of range"))),
            };
            if let Some(c) = c_r {
                if c >= c_l {
                    return Err(err(format!("c_r {c} is not below c_l {c_l}")));
                }
            }
            if rows
                .last()
                .is_some_and(|r: &LookupRow| r.vdd * 1e3 >= mv as f64 - 0.5)
            {
                return Err(err("rows must be sorted by increasing vdd".into()));
            }
            rows.push(LookupRow {
                vdd: mv as f64 / 1e3,
                c_l,
                saturated: sat,
                c_r,
                beta: ppm as f64 / 1e6,
            });
        }
        let missing = |k: &str| Error::Parse {
            path: path.to_string(),
            line: 0,
            reason: format!("missing header `{k}`"),
        };
        Ok(LookupTable {
            header: TableHeader {
                config_sha256: hash.ok_or_else(|| missing("config_sha256"))?,
                seed: seed.ok_or_else(|| missing("seed"))?,
                temperature: temperature.ok_or_else(|| missing("temperature_K"))?,
                counter_max: counter_max.ok_or_else(|| missing("counter_max"))?,
                margin: margin.ok_or_else(|| missing("margin"))?,
            },
            rows,
        })
    }
}

/// Inputs shared by every supply of a calibration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrator<'a> {
    pub cfg: &'a ColumnConfig,
    pub model: &'a VariationModel,
    pub replica: &'a ReplicaConfig,
    pub sosa: &'a SosaModel,
    pub settings: &'a CalibSettings,
}

impl Calibrator<'_> {
    /// Calibrates one supply on an all-'0' bank.
    pub fn row(&self, vdd: f64) -> Result<(LookupRow, RowDetail)> {
        let cfg = self.cfg.with_vdd(vdd);
        cfg.validate()?;
        let timing = timing_at(self.replica, self.sosa, &cfg.params, &cfg.env, self.model)?;
        let window = sensing_window(&cfg, self.model.dvth())?;
        let bank = BankState::new(cfg.depth)?;
        let count = measure_cl(&bank, &cfg, self.model, timing.t_sa, self.settings)?;
        let c_r = select_cr(
            window.t_r0_max,
            timing.t_sa,
            count.c_l,
            self.settings.margin,
        );
        // Leakage reference: the measured flip, or the analytic bound past a
        // saturated counter.
        let t_leak = match count.t_flip {
            Some(t) => t,
            None => window
                .t_leak_min
                .max(f64::from(self.settings.counter_max) * timing.t_sa),
        };
        let beta = match c_r {
            Some(c) => f64::from(c) * timing.t_sa / t_leak,
            None => self.settings.margin * window.t_r0_max / t_leak,
        };
        log::debug!(
            "vdd {vdd}: t_ck {:.4e} c_l {} c_r {:?} beta {beta:.4}",
            timing.t_ck,
            count.c_l,
            c_r
        );
        Ok((
            LookupRow {
                vdd,
                c_l: count.c_l,
                saturated: count.saturated,
                c_r,
                beta,
            },
            RowDetail {
                timing,
                window,
                count,
            },
        ))
    }

    /// Calibrates every supply in `vdd_list` (sorted ascending in the table).
    /// Rows below the lowest valid supply are forced invalid.
    pub fn build(
        &self,
        vdd_list: &[f64],
        config_sha256: &str,
    ) -> Result<(LookupTable, Vec<RowDetail>)> {
        if vdd_list.is_empty() {
            return Err(Error::config("calib.vdd_list", "needs at least one supply"));
        }
        let mut list = vdd_list.to_vec();
        list.sort_by(f64::total_cmp);
        if list.windows(2).any(|w| (w[1] - w[0]).abs() < 1e-3) {
            return Err(Error::config(
                "calib.vdd_list",
                "supplies must differ by at least 1 mV",
            ));
        }
        let mut rows = Vec::with_capacity(list.len());
        let mut details = Vec::with_capacity(list.len());
        for &v in &list {
            let (r, d) = self.row(v)?;
            rows.push(r);
            details.push(d);
        }
        Ok((
            LookupTable {
                header: TableHeader {
                    config_sha256: config_sha256.to_string(),
                    seed: self.model.seed,
                    temperature: self.cfg.env.temperature,
                    counter_max: self.settings.counter_max,
                    margin: self.settings.margin,
                },
                rows,
            },
            details,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_convention() {
        // A flip between the 12th and 13th activation is seen at the 13th.
        assert_eq!(count_for(12.5 * 60e-9, 60e-9), 13);
        assert_eq!(count_for(13.0 * 60e-9, 60e-9), 13);
        assert_eq!(count_for(1e-12, 60e-9), 1);
    }

    #[test]
    fn read_count_selection() {
        // 1.2 × 97.8 ns needs two 60 ns activations; 389 ns leaves room.
        let c_l = count_for(389e-9, 60e-9);
        assert_eq!(c_l, 7);
        assert_eq!(select_cr(97.8e-9, 60e-9, c_l, 1.2), Some(2));
        assert_eq!(select_cr(97.8e-9, 60e-9, 2, 1.2), None);
        assert_eq!(select_cr(1e-12, 60e-9, 5, 1.2), Some(1));
        // Exact multiples need no extra activation.
        assert_eq!(select_cr(100e-9, 60e-9, 10, 1.2), Some(2));
    }

    #[test]
    fn nominal_count_matches_closed_form() {
        let cfg = ColumnConfig::default().with_vdd(0.3);
        let model = VariationModel {
            trials: 1,
            ..VariationModel::disabled()
        };
        let w = sensing_window(&cfg, 0.0).unwrap();
        let t_sa = w.t_leak_min / 12.5;
        let s = CalibSettings::default();
        let bank = BankState::new(256).unwrap();
        let c = measure_cl(&bank, &cfg, &model, t_sa, &s).unwrap();
        assert_eq!(c.c_l, 13);
        assert!(!c.saturated);
        let t = c.t_flip.unwrap();
        assert!(
            (t / w.t_leak_min - 1.0).abs() < 0.1,
            "{t} vs {}",
            w.t_leak_min
        );
    }

    #[test]
    fn saturation() {
        let cfg = ColumnConfig::default().with_vdd(0.35);
        let w = sensing_window(&cfg, 0.0).unwrap();
        let s = CalibSettings {
            counter_max: 4,
            ..CalibSettings::default()
        };
        let model = VariationModel {
            trials: 1,
            ..VariationModel::disabled()
        };
        let bank = BankState::new(256).unwrap();
        let c = measure_cl(&bank, &cfg, &model, w.t_leak_min / 10.0, &s).unwrap();
        assert_eq!((c.c_l, c.saturated, c.t_flip), (4, true, None));
    }

    #[test]
    fn table_text_round_trip() {
        let t = LookupTable {
            header: TableHeader {
                config_sha256: "ab".repeat(32),
                seed: 9,
                temperature: 300.0,
                counter_max: 1023,
                margin: 1.2,
            },
            rows: vec![
                LookupRow {
                    vdd: 0.25,
                    c_l: 11,
                    saturated: false,
                    c_r: None,
                    beta: 1.7,
                },
                LookupRow {
                    vdd: 0.4,
                    c_l: 600,
                    saturated: false,
                    c_r: Some(280),
                    beta: 0.48,
                },
                LookupRow {
                    vdd: 0.45,
                    c_l: 1023,
                    saturated: true,
                    c_r: Some(290),
                    beta: 0.2,
                },
            ],
        };
        let text = t.to_tsv();
        let back = LookupTable::from_tsv(&text, "t").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_tsv(), text);
        assert_eq!(back.vdd_min(), Some(0.4));
        assert!(back.row_for(0.4).is_some());
        let bad = text.replace("280", "700");
        assert!(matches!(
            LookupTable::from_tsv(&bad, "t"),
            Err(Error::Parse { .. })
        ));
    }
}
