//! Monte Carlo threshold mismatch and the statistics built on it.

use rayon::prelude::*;

use crate::column::{window_ratio, ColumnConfig, DataPattern};
use crate::error::{Error, Result};
use crate::rng::{CounterRng, Stream};

/// Local mismatch description shared by every Monte Carlo path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationModel {
    /// Per-cell threshold standard deviation (V).
    pub sigma_vth: f64,
    /// Sense-amplifier input offset standard deviation (V).
    pub sigma_os: f64,
    pub seed: u64,
    pub trials: usize,
    /// Worst accessed-cell threshold excursion, in units of `sigma_vth`,
    /// used as the ΔVth guard of the sensing window.
    pub dvth_sigmas: f64,
}

impl Default for VariationModel {
    fn default() -> Self {
        VariationModel {
            sigma_vth: 0.03,
            sigma_os: 0.0114,
            seed: 1,
            trials: 1000,
            dvth_sigmas: 5.0,
        }
    }
}

impl VariationModel {
    /// No mismatch anywhere.
    pub fn disabled() -> Self {
        VariationModel {
            sigma_vth: 0.0,
            sigma_os: 0.0,
            ..VariationModel::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_vth >= 0.0 && self.sigma_vth.is_finite()) {
            return Err(Error::config("variation.sigma_vth", "must be >= 0"));
        }
        if !(self.sigma_os >= 0.0 && self.sigma_os.is_finite()) {
            return Err(Error::config("variation.sigma_os", "must be >= 0"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if !(self.dvth_sigmas >= 0.0 && self.dvth_sigmas.is_finite()) {
            return Err(Error::config("variation.dvth_sigmas", "must be >= 0"));
        }
        Ok(())
    }

    /// ΔVth guard in volts.
    pub fn dvth(&self) -> f64 {
        self.dvth_sigmas * self.sigma_vth
    }

    pub fn rng(&self) -> CounterRng {
        CounterRng::new(self.seed)
    }
}

/// Threshold of cell `cell` in Monte Carlo trial `trial`.
pub fn sample_vth(model: &VariationModel, vth0: f64, cell: u64, trial: u64) -> f64 {
    if model.sigma_vth == 0.0 {
        return vth0;
    }
    vth0 + model.sigma_vth * model.rng().normal(Stream::CellVth, trial, cell)
}

/// Thresholds of cells `first..first + out.len()` in `trial`.
pub fn fill_vth(
    model: &VariationModel,
    rng: &CounterRng,
    vth0: f64,
    trial: u64,
    first: u64,
    out: &mut [f64],
) {
    if model.sigma_vth == 0.0 {
        out.fill(vth0);
        return;
    }
    rng.fill_normals(Stream::CellVth, trial, first, out);
    for v in out.iter_mut() {
        *v = vth0 + model.sigma_vth * *v;
    }
}

/// Offset of sense amplifier `sa` in `trial`.
pub fn sample_offset(model: &VariationModel, sa: u64, trial: u64) -> f64 {
    if model.sigma_os == 0.0 {
        return 0.0;
    }
    model.sigma_os * model.rng().normal(Stream::SenseOffset, trial, sa)
}

/// Mean, spread and range of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    /// Summarises `values` in index order, so the result does not depend on
    /// how they were produced.
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "summary of an empty sample");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let std = if min == max {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        Summary {
            mean: mean.clamp(min, max),
            std,
            min,
            max,
            count: values.len(),
        }
    }

    /// Coefficient of variation.
    pub fn cv(&self) -> f64 {
        self.std / self.mean.abs()
    }
}

/// Read and leakage current statistics of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentStats {
    /// Accessed-cell on-current.
    pub read: Summary,
    /// Total idle leakage.
    pub leak: Summary,
}

/// Monte Carlo statistics of `i_r0` and `i_l` at the closed-form evaluation
/// voltage. Every trial draws a fresh threshold for each cell, including the
/// idle ones.
pub fn mc_current_stats(
    cfg: &ColumnConfig,
    pattern: &DataPattern,
    model: &VariationModel,
) -> Result<CurrentStats> {
    cfg.validate()?;
    model.validate()?;
    if model.trials < 100 {
        return Err(Error::Usage(format!(
            "current statistics need at least 100 trials, got {}",
            model.trials
        )));
    }
    if pattern.depth() != cfg.depth {
        return Err(Error::config(
            "column.depth",
            "pattern depth differs from column",
        ));
    }
    let accessed = pattern
        .accessed_row()
        .ok_or_else(|| Error::Usage("current statistics need an accessed row".into()))?;
    let m = cfg.cell_model()?;
    let v = cfg.eval_voltage();
    let rng = model.rng();
    let samples: Vec<(f64, f64)> = (0..model.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut vth = vec![0.0; cfg.depth];
            fill_vth(model, &rng, cfg.params.vth0, trial, 0, &mut vth);
            let read = m.read_zero(v, vth[accessed]);
            let leak: f64 = pattern
                .bits()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != accessed)
                .map(|(i, &b)| {
                    if b {
                        m.leak_one(v, vth[i])
                    } else {
                        m.leak_zero(v, vth[i])
                    }
                })
                .sum();
            (read, leak)
        })
        .collect();
    let read: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let leak: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(CurrentStats {
        read: Summary::from_values(&read),
        leak: Summary::from_values(&leak),
    })
}

/// Cartesian sweep axes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub vdd: Vec<f64>,
    pub temperature: Vec<f64>,
    pub depth: Vec<usize>,
    /// Fraction of cells storing '0'.
    pub r01: Vec<f64>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.vdd.len() * self.temperature.len() * self.depth.len() * self.r01.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order: vdd, temperature, depth, r01.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &vdd in &self.vdd {
            for &temperature in &self.temperature {
                for &depth in &self.depth {
                    for &r01 in &self.r01 {
                        out.push(GridPoint {
                            vdd,
                            temperature,
                            depth,
                            r01,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub vdd: f64,
    pub temperature: f64,
    pub depth: usize,
    pub r01: f64,
}

/// Metrics at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    /// Test-mode leakage of all `N` cells (A).
    pub leakage: Summary,
    /// Leakage-only discharge time of the same column (s).
    pub t_leak: Summary,
    /// Read-'0' discharge time with the accessed cell at row 0 (s).
    pub t_read0: Summary,
    /// Variation-free `min(T_leak)/max(T_r0)`.
    pub window_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: usize,
}

/// Evaluates leakage, both discharge times and the window ratio over `grid`.
///
/// At each point the test-mode column holds `round(r01·N)` zeros; the read
/// column stores '0' at the accessed row 0 and `round(r01·(N−1))` zeros among
/// the idle rows. With `sigma_vth = 0` every trial is identical to the
/// closed-form result.
pub fn sweep(base: &ColumnConfig, grid: &SweepGrid, model: &VariationModel) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Usage("sweep grid has an empty axis".into()));
    }
    model.validate()?;
    let rows = grid
        .points()
        .into_iter()
        .map(|pt| sweep_point(base, pt, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        rows,
        trials: model.trials,
    })
}

fn sweep_point(base: &ColumnConfig, pt: GridPoint, model: &VariationModel) -> Result<SweepRow> {
    if !(0.0..=1.0).contains(&pt.r01) {
        return Err(Error::config(
            "sweep.r01",
            format!("{} not in [0, 1]", pt.r01),
        ));
    }
    let cfg = base
        .with_vdd(pt.vdd)
        .with_depth(pt.depth)
        .with_temperature(pt.temperature);
    cfg.validate()?;
    let n = pt.depth;
    let test_zeros = (pt.r01 * n as f64).round() as usize;
    let read_zeros = (pt.r01 * (n - 1) as f64).round() as usize;
    // Row 0 is the accessed '0'.
    let read_bits: Vec<bool> = (0..n).map(|i| i != 0 && i > read_zeros).collect();
    let test_bits: Vec<bool> = (0..n).map(|i| i >= test_zeros).collect();

    let m = cfg.cell_model()?;
    let v = cfg.eval_voltage();
    let q = cfg.swing_charge();
    let rng = model.rng();
    let per_trial: Vec<[f64; 3]> = (0..model.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut vth = vec![0.0; n];
            fill_vth(model, &rng, cfg.params.vth0, trial, 0, &mut vth);
            let cell = |i: usize, one: bool| {
                if one {
                    m.leak_one(v, vth[i])
                } else {
                    m.leak_zero(v, vth[i])
                }
            };
            let leak: f64 = test_bits.iter().enumerate().map(|(i, &b)| cell(i, b)).sum();
            let read_leak: f64 = read_bits
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &b)| cell(i, b))
                .sum();
            let read = m.read_zero(v, vth[0]);
            [leak, q / leak, q / (read_leak + read)]
        })
        .collect();
    let col = |k: usize| Summary::from_values(&per_trial.iter().map(|r| r[k]).collect::<Vec<_>>());
    Ok(SweepRow {
        point: pt,
        leakage: col(0),
        t_leak: col(1),
        t_read0: col(2),
        window_ratio: window_ratio(&cfg, 0.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::column::{column_leakage, t_read0};

    #[test]
    fn sample_vth_contract() {
        let zero = VariationModel::disabled();
        assert_eq!(sample_vth(&zero, 0.35, 17, 3), 0.35);
        let m = VariationModel::default();
        assert_eq!(sample_vth(&m, 0.35, 17, 3), sample_vth(&m, 0.35, 17, 3));
        assert_ne!(sample_vth(&m, 0.35, 17, 3), sample_vth(&m, 0.35, 18, 3));

        let rng = m.rng();
        let mut v = vec![0.0; 100_000];
        fill_vth(&m, &rng, 0.35, 0, 0, &mut v);
        let s = Summary::from_values(&v);
        assert!(((s.std - 0.03) / 0.03).abs() < 0.02);
        let bound = 3.0 * 0.03 / (v.len() as f64).sqrt();
        assert!((s.mean - 0.35).abs() < bound);
        assert_eq!(v[12_345], sample_vth(&m, 0.35, 12_345, 0));
    }

    #[test]
    fn offsets() {
        let m = VariationModel::default();
        assert_eq!(sample_offset(&VariationModel::disabled(), 1, 1), 0.0);
        let xs: Vec<f64> = (0..100_000).map(|k| sample_offset(&m, k, 9)).collect();
        let s = Summary::from_values(&xs);
        assert!(((s.std - m.sigma_os) / m.sigma_os).abs() < 0.02);
    }

    #[test]
    fn summary_invariants() {
        let s = Summary::from_values(&[1.0, 2.0, 6.0]);
        assert_eq!(s.mean, 3.0);
        assert!(s.min <= s.mean && s.mean <= s.max);
        assert!((s.std - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let flat = Summary::from_values(&[0.1; 7]);
        assert_eq!(flat.std, 0.0);
    }

    #[test]
    fn current_stats_without_variation() {
        let cfg = ColumnConfig::default();
        let p = DataPattern::with_zero_count(256, 128, Some(0)).unwrap();
        let m = VariationModel {
            trials: 100,
            ..VariationModel::disabled()
        };
        let s = mc_current_stats(&cfg, &p, &m).unwrap();
        assert_eq!(s.read.std, 0.0);
        assert_eq!(s.leak.std, 0.0);
        let l = column_leakage(&cfg, &p, cfg.eval_voltage()).unwrap();
        assert!(((s.leak.mean - l) / l).abs() < 1e-12);
        assert!(mc_current_stats(&cfg, &p, &VariationModel { trials: 10, ..m }).is_err());
    }

    #[test]
    fn read_varies_more_than_leak() {
        let cfg = ColumnConfig::default().with_vdd(0.3);
        let p = DataPattern::with_zero_count(256, 128, Some(0)).unwrap();
        let s = mc_current_stats(&cfg, &p, &VariationModel::default()).unwrap();
        assert!(s.read.cv() > s.leak.cv());
    }

    #[test]
    fn leak_cv_averages_down() {
        let m = VariationModel::default();
        let base = ColumnConfig::default();
        let cv = |n: usize| {
            let p = DataPattern::with_zero_count(n, n / 2, Some(n - 1)).unwrap();
            mc_current_stats(&base.with_depth(n), &p, &m)
                .unwrap()
                .leak
                .cv()
        };
        let ratio = cv(64) / cv(256);
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn sweep_shapes() {
        let base = ColumnConfig::default();
        let m = VariationModel {
            trials: 4,
            ..VariationModel::disabled()
        };
        let one = SweepGrid {
            vdd: vec![0.3],
            temperature: vec![300.0],
            depth: vec![256],
            r01: vec![0.5],
        };
        let r = sweep(&base, &one, &m).unwrap();
        assert_eq!(r.rows.len(), 1);
        let cfg = base.with_vdd(0.3);
        let p = DataPattern::with_zero_count(256, 129, Some(0)).unwrap();
        let tr = t_read0(&cfg, &p, cfg.params.vth0).unwrap();
        assert!(((r.rows[0].t_read0.mean - tr) / tr).abs() < 1e-12);

        let empty = SweepGrid {
            vdd: vec![],
            ..one.clone()
        };
        assert!(matches!(sweep(&base, &empty, &m), Err(Error::Usage(_))));
    }

    #[test]
    fn sweep_linear_and_monotone() {
        let base = ColumnConfig::default();
        let m = VariationModel {
            trials: 1,
            ..VariationModel::disabled()
        };
        let grid = SweepGrid {
            vdd: vec![0.25],
            temperature: vec![300.0],
            depth: vec![64, 128, 256, 512],
            r01: vec![0.5],
        };
        let r = sweep(&base, &grid, &m).unwrap();
        // Least-squares slope through the origin and relative residual.
        let xs: Vec<f64> = r.rows.iter().map(|row| row.point.depth as f64).collect();
        let ys: Vec<f64> = r.rows.iter().map(|row| row.leakage.mean).collect();
        let k = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>()
            / xs.iter().map(|x| x * x).sum::<f64>();
        for (x, y) in xs.iter().zip(&ys) {
            assert!(((y - k * x) / y).abs() < 1e-9);
        }

        let grid = SweepGrid {
            vdd: vec![0.25, 0.3, 0.35, 0.4, 0.45],
            temperature: vec![300.0],
            depth: vec![256],
            r01: vec![0.5],
        };
        let r = sweep(&base, &grid, &m).unwrap();
        assert!(r
            .rows
            .windows(2)
            .all(|w| w[1].window_ratio > w[0].window_ratio));
    }

    #[test]
    fn sweep_is_thread_count_independent() {
        let base = ColumnConfig::default();
        let m = VariationModel {
            trials: 200,
            ..VariationModel::default()
        };
        let grid = SweepGrid {
            vdd: vec![0.25, 0.4],
            temperature: vec![300.0],
            depth: vec![64],
            r01: vec![0.25],
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sweep(&base, &grid, &m).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
