//! Column-level leakage, closed-form discharge delays and the safety
//! sensing window.
//!
//! Closed-form delays treat every current as constant over the swing from
//! `VDD` to `VREF`, evaluated at a single bitline voltage (see
//! [`EvalPoint`]). The ODE in [`crate::discharge`] is the reference these
//! are checked against.

use crate::device::{CellModel, DeviceParams, Environment};
use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 4096;
/// 10 fF, sized for a 256-row column.
pub const DEFAULT_C_RBL: f64 = 10e-15;
pub const DEFAULT_DEPTH: usize = 256;

/// Bitline voltage at which closed-form currents are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPoint {
    /// `(VDD + VREF) / 2`.
    #[default]
    Midpoint,
    /// `VDD` (the precharge level). Overestimates currents, used only for
    /// comparison.
    Supply,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnConfig {
    pub depth: usize,
    /// Read-bitline capacitance (F).
    pub c_rbl: f64,
    /// Sense reference (V).
    pub v_ref: f64,
    pub env: Environment,
    pub params: DeviceParams,
    pub eval_point: EvalPoint,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        let env = Environment::default();
        ColumnConfig {
            depth: DEFAULT_DEPTH,
            c_rbl: DEFAULT_C_RBL,
            v_ref: env.vdd / 2.0,
            env,
            params: DeviceParams::default(),
            eval_point: EvalPoint::Midpoint,
        }
    }
}

impl ColumnConfig {
    /// Column with the default capacitance and `VREF = VDD/2`.
    pub fn new(depth: usize, params: DeviceParams, env: Environment) -> Result<Self> {
        let cfg = ColumnConfig {
            depth,
            c_rbl: DEFAULT_C_RBL,
            v_ref: env.vdd / 2.0,
            env,
            params,
            eval_point: EvalPoint::Midpoint,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.env.validate()?;
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return Err(Error::config(
                "column.depth",
                format!("{} not in [1, {MAX_DEPTH}]", self.depth),
            ));
        }
        if !(self.c_rbl > 0.0 && self.c_rbl.is_finite()) {
            return Err(Error::config(
                "column.c_rbl",
                "must be a positive capacitance",
            ));
        }
        if !(self.v_ref > 0.0 && self.v_ref < self.env.vdd) {
            return Err(Error::config(
                "column.v_ref",
                format!("{} V not in (0, vdd = {} V)", self.v_ref, self.env.vdd),
            ));
        }
        Ok(())
    }

    /// Same column at another supply, keeping `VREF/VDD` fixed.
    pub fn with_vdd(&self, vdd: f64) -> Self {
        let ratio = self.v_ref / self.env.vdd;
        ColumnConfig {
            env: Environment { vdd, ..self.env },
            v_ref: vdd * ratio,
            ..*self
        }
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        ColumnConfig {
            env: Environment {
                temperature,
                ..self.env
            },
            ..*self
        }
    }

    pub fn with_depth(&self, depth: usize) -> Self {
        ColumnConfig { depth, ..*self }
    }

    /// Voltage swing `VDD − VREF`.
    pub fn swing(&self) -> f64 {
        self.env.vdd - self.v_ref
    }

    /// Charge removed between precharge and the sense reference.
    pub fn swing_charge(&self) -> f64 {
        self.c_rbl * self.swing()
    }

    pub fn eval_voltage(&self) -> f64 {
        match self.eval_point {
            EvalPoint::Midpoint => 0.5 * (self.env.vdd + self.v_ref),
            EvalPoint::Supply => self.env.vdd,
        }
    }

    pub fn cell_model(&self) -> Result<CellModel> {
        CellModel::new(&self.params, &self.env)
    }
}

/// Stored bits of one column and the row being read, if any.
///
/// `accessed_row = None` is the test-mode configuration: every word line is
/// low and all `N` cells leak.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPattern {
    bits: Vec<bool>,
    accessed_row: Option<usize>,
}

impl DataPattern {
    pub fn new(bits: Vec<bool>, accessed_row: Option<usize>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Usage("data pattern needs at least one cell".into()));
        }
        if let Some(r) = accessed_row {
            if r >= bits.len() {
                return Err(Error::Usage(format!(
                    "accessed row {r} out of range for {} cells",
                    bits.len()
                )));
            }
        }
        Ok(DataPattern { bits, accessed_row })
    }

    /// Accessed cell `accessed` at row 0; idle cells all store `idle`.
    pub fn uniform(depth: usize, accessed: bool, idle: bool) -> Result<Self> {
        let mut bits = vec![idle; depth];
        if let Some(b) = bits.first_mut() {
            *b = accessed;
        }
        DataPattern::new(bits, Some(0))
    }

    /// Reading '1' with every idle cell at '0': maximum leakage.
    pub fn worst_read_one(depth: usize) -> Result<Self> {
        DataPattern::uniform(depth, true, false)
    }

    /// Reading '0' with every idle cell at '1': minimum leakage.
    pub fn worst_read_zero(depth: usize) -> Result<Self> {
        DataPattern::uniform(depth, false, true)
    }

    /// Test mode with every cell storing '0'.
    pub fn all_idle_zero(depth: usize) -> Result<Self> {
        DataPattern::new(vec![false; depth], None)
    }

    /// Rows `0..zeros` store '0', the rest store '1'.
    pub fn with_zero_count(
        depth: usize,
        zeros: usize,
        accessed_row: Option<usize>,
    ) -> Result<Self> {
        let bits = (0..depth).map(|i| i >= zeros).collect();
        DataPattern::new(bits, accessed_row)
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn accessed_row(&self) -> Option<usize> {
        self.accessed_row
    }

    pub fn accessed_value(&self) -> Option<bool> {
        self.accessed_row.map(|r| self.bits[r])
    }

    fn idle_cells(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        let skip = self.accessed_row;
        self.bits
            .iter()
            .copied()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != skip)
    }

    /// K: idle cells storing '0'.
    pub fn idle_zeros(&self) -> usize {
        self.idle_cells().filter(|(_, b)| !*b).count()
    }

    /// M: idle cells storing '1'.
    pub fn idle_ones(&self) -> usize {
        self.idle_cells().filter(|(_, b)| *b).count()
    }

    /// Fraction of '0' cells in the whole column.
    pub fn r01(&self) -> f64 {
        self.bits.iter().filter(|b| !**b).count() as f64 / self.bits.len() as f64
    }

    fn check(&self, cfg: &ColumnConfig) -> Result<()> {
        if self.bits.len() != cfg.depth {
            return Err(Error::config(
                "column.depth",
                format!(
                    "pattern has {} cells but the column is {} deep",
                    self.bits.len(),
                    cfg.depth
                ),
            ));
        }
        Ok(())
    }
}

/// A delay that is either finite or never reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DischargeTime {
    Finite(f64),
    /// No current discharges the bitline.
    Never,
}

impl DischargeTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            DischargeTime::Finite(t) => Some(t),
            DischargeTime::Never => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, DischargeTime::Finite(_))
    }
}

/// Bounds of the interval in which sampling the bitline separates '0' from
/// '1' for every data pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingWindow {
    /// Slowest read-'0' discharge.
    pub t_r0_max: f64,
    /// Fastest leakage-only discharge.
    pub t_leak_min: f64,
    pub valid: bool,
    /// Smallest admissible fraction of `t_leak_min` used as sensing time.
    pub beta_lower: f64,
    pub beta_upper: f64,
}

/// Total idle leakage `(K + α·M)·i_l0` at bitline voltage `v_rbl`.
pub fn column_leakage(cfg: &ColumnConfig, pattern: &DataPattern, v_rbl: f64) -> Result<f64> {
    cfg.validate()?;
    pattern.check(cfg)?;
    check_rbl(cfg, v_rbl)?;
    let m = cfg.cell_model()?;
    let k = pattern.idle_zeros() as f64;
    let mm = pattern.idle_ones() as f64;
    Ok((k + m.alpha(v_rbl) * mm) * m.leak_zero(v_rbl, cfg.params.vth0))
}

/// Explicit per-cell leakage sum with individual thresholds.
pub fn column_leakage_sampled(
    cfg: &ColumnConfig,
    pattern: &DataPattern,
    v_rbl: f64,
    vth: &[f64],
) -> Result<f64> {
    cfg.validate()?;
    pattern.check(cfg)?;
    check_rbl(cfg, v_rbl)?;
    if vth.len() != cfg.depth {
        return Err(Error::Usage(format!(
            "threshold map has {} entries for {} cells",
            vth.len(),
            cfg.depth
        )));
    }
    let m = cfg.cell_model()?;
    Ok(pattern
        .idle_cells()
        .map(|(i, b)| {
            if b {
                m.leak_one(v_rbl, vth[i])
            } else {
                m.leak_zero(v_rbl, vth[i])
            }
        })
        .sum())
}

fn check_rbl(cfg: &ColumnConfig, v: f64) -> Result<()> {
    if !(0.0..=cfg.env.vdd).contains(&v) {
        return Err(Error::domain(
            "v_rbl",
            format!("{v} V outside [0, {}] V", cfg.env.vdd),
        ));
    }
    Ok(())
}

/// Read-'0' discharge delay `C·(VDD − VREF)/(i_l + i_r0)`.
pub fn t_read0(cfg: &ColumnConfig, pattern: &DataPattern, vth_access: f64) -> Result<f64> {
    match pattern.accessed_value() {
        Some(false) => {}
        Some(true) => {
            return Err(Error::Usage(
                "t_read0 needs an accessed cell storing '0'".into(),
            ))
        }
        None => return Err(Error::Usage("t_read0 needs an accessed row".into())),
    }
    let v = cfg.eval_voltage();
    let leak = column_leakage(cfg, pattern, v)?;
    let read = cfg.cell_model()?.read_zero(v, vth_access);
    Ok(cfg.swing_charge() / (leak + read))
}

/// Leakage-only discharge delay `C·(VDD − VREF)/i_l`.
pub fn t_leak(cfg: &ColumnConfig, pattern: &DataPattern) -> Result<DischargeTime> {
    let leak = column_leakage(cfg, pattern, cfg.eval_voltage())?;
    if leak > 0.0 {
        Ok(DischargeTime::Finite(cfg.swing_charge() / leak))
    } else {
        Ok(DischargeTime::Never)
    }
}

/// `min(T_leak)/max(T_r0) = exp((VDD − ΔVth)/(n·vt))/N + α`.
pub fn window_ratio(cfg: &ColumnConfig, dvth: f64) -> Result<f64> {
    if !(dvth >= 0.0) {
        return Err(Error::domain("dvth", format!("{dvth} V is negative")));
    }
    cfg.validate()?;
    let m = cfg.cell_model()?;
    Ok(((cfg.env.vdd - dvth) / m.slope()).exp() / cfg.depth as f64 + m.alpha(cfg.eval_voltage()))
}

/// Sensing window from the two extreme patterns.
///
/// The slow bound reads a '0' whose threshold is `dvth` above nominal, with
/// every idle cell at '1'. The fast bound is the test-mode discharge with all
/// `N` cells storing '0'.
pub fn sensing_window(cfg: &ColumnConfig, dvth: f64) -> Result<SensingWindow> {
    if !(dvth >= 0.0) {
        return Err(Error::domain("dvth", format!("{dvth} V is negative")));
    }
    let t_r0_max = t_read0(
        cfg,
        &DataPattern::worst_read_zero(cfg.depth)?,
        cfg.params.vth0 + dvth,
    )?;
    let t_leak_min = t_leak(cfg, &DataPattern::all_idle_zero(cfg.depth)?)?
        .seconds()
        .expect("an all-zero test-mode column always leaks");
    let beta_lower = t_r0_max / t_leak_min;
    Ok(SensingWindow {
        t_r0_max,
        t_leak_min,
        valid: t_leak_min > t_r0_max,
        beta_lower,
        beta_upper: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Independent evaluation of the leakage and read currents, written out
    /// term by term.
    fn oracle_currents(cfg: &ColumnConfig, v: f64) -> (f64, f64, f64) {
        let vt = 1.380_649e-23 * cfg.env.temperature / 1.602_176_634e-19;
        let p = cfg.params;
        let nvt = p.n * vt;
        let vth = p.vth0 + p.vth_tempco * (cfg.env.temperature - 300.0);
        let il0 = p.i0 * (-vth / nvt).exp() * (p.lambda * v / nvt).exp() * (1.0 - (-v / vt).exp());
        let alpha = (-(1.0 + p.lambda) * v / (2.0 * nvt)).exp();
        let ir0 = il0 * (cfg.env.vdd / nvt).exp();
        (il0, alpha, ir0)
    }

    #[test]
    fn leakage_examples() {
        let cfg = ColumnConfig::default();
        let one = cfg.with_depth(1);
        let p = DataPattern::worst_read_one(1).unwrap();
        assert_eq!(column_leakage(&one, &p, 0.2).unwrap(), 0.0);

        let zeros = DataPattern::worst_read_one(256).unwrap();
        let ones = DataPattern::worst_read_zero(256).unwrap();
        let (il0, alpha, _) = oracle_currents(&cfg, 0.125);
        let lz = column_leakage(&cfg, &zeros, 0.125).unwrap();
        assert!(rel(lz, 255.0 * il0) < 1e-12);
        let lo = column_leakage(&cfg, &ones, 0.125).unwrap();
        // Explicit per-cell summation as the second route.
        let vth = vec![cfg.params.vth0; 256];
        let lo_sum = column_leakage_sampled(&cfg, &ones, 0.125, &vth).unwrap();
        assert!(rel(lo, lo_sum) < 1e-12);
        assert!((lo / lz - alpha).abs() < 1e-12);
        assert!((alpha - 0.1496).abs() < 1e-4);
    }

    #[test]
    fn pattern_mismatch_is_rejected() {
        let cfg = ColumnConfig::default();
        let p = DataPattern::worst_read_one(64).unwrap();
        assert!(matches!(
            column_leakage(&cfg, &p, 0.1),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn pattern_counts() {
        let p = DataPattern::with_zero_count(10, 4, Some(2)).unwrap();
        assert_eq!(p.idle_zeros(), 3);
        assert_eq!(p.idle_ones(), 6);
        assert!((p.r01() - 0.4).abs() < 1e-15);
        assert_eq!(p.accessed_value(), Some(false));
        let t = DataPattern::all_idle_zero(8).unwrap();
        assert_eq!(t.idle_zeros() + t.idle_ones(), 8);
        assert!(DataPattern::new(vec![true; 3], Some(3)).is_err());
    }

    #[test]
    fn t_read0_examples() {
        let cfg = ColumnConfig::default();
        let (il0, alpha, ir0) = oracle_currents(&cfg, 0.1875);
        // Single cell: no idle leakage.
        let one = cfg.with_depth(1);
        let p1 = DataPattern::new(vec![false], Some(0)).unwrap();
        let t = t_read0(&one, &p1, cfg.params.vth0).unwrap();
        assert!(rel(t, 10e-15 * 0.125 / ir0) < 1e-12);
        assert!(rel(t, 1.1808e-7) < 1e-3, "{t:e}");

        let worst = DataPattern::worst_read_zero(256).unwrap();
        let t = t_read0(&cfg, &worst, cfg.params.vth0).unwrap();
        assert!(rel(t, 10e-15 * 0.125 / (ir0 + 255.0 * alpha * il0)) < 1e-12);
        assert!(rel(t, 1.1636e-7) < 1e-3, "{t:e}");

        let doubled = ColumnConfig {
            c_rbl: 20e-15,
            ..cfg
        };
        assert!(rel(t_read0(&doubled, &worst, cfg.params.vth0).unwrap(), 2.0 * t) < 1e-12);

        let read_one = DataPattern::worst_read_one(256).unwrap();
        assert!(matches!(
            t_read0(&cfg, &read_one, 0.35),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn supply_evaluation_reproduces_hand_values() {
        // Evaluating at VDD instead of the midpoint gives the coarser
        // hand-calculation numbers.
        let cfg = ColumnConfig {
            eval_point: EvalPoint::Supply,
            ..ColumnConfig::default()
        };
        let p1 = DataPattern::new(vec![false], Some(0)).unwrap();
        let t = t_read0(&cfg.with_depth(1), &p1, 0.35).unwrap();
        assert!(rel(t, 9.93e-8) < 2e-3, "{t:e}");
        let tl = t_leak(&cfg, &DataPattern::worst_read_one(256).unwrap()).unwrap();
        assert!(rel(tl.seconds().unwrap(), 3.89e-7) < 2e-3);
    }

    #[test]
    fn t_leak_examples() {
        let cfg = ColumnConfig::default();
        let (il0, _, _) = oracle_currents(&cfg, 0.1875);
        let p = DataPattern::worst_read_one(256).unwrap();
        let t = t_leak(&cfg, &p).unwrap().seconds().unwrap();
        assert!(rel(t, 10e-15 * 0.125 / (255.0 * il0)) < 1e-12);
        assert!(rel(t, 4.6292e-7) < 1e-3, "{t:e}");

        let halved = ColumnConfig {
            params: DeviceParams {
                i0: cfg.params.i0 / 2.0,
                ..cfg.params
            },
            ..cfg
        };
        let t2 = t_leak(&halved, &p).unwrap().seconds().unwrap();
        assert!(rel(t2, 2.0 * t) < 1e-12);

        let one = cfg.with_depth(1);
        assert_eq!(
            t_leak(&one, &DataPattern::worst_read_one(1).unwrap()).unwrap(),
            DischargeTime::Never
        );
    }

    #[test]
    fn window_ratio_examples() {
        let cfg = ColumnConfig::default();
        let r = window_ratio(&cfg, 0.0).unwrap();
        // 999.70/256 + α(0.1875) = 3.9051 + 0.0579
        assert!((r - 3.9629).abs() < 1e-3, "{r}");
        let low = cfg.with_vdd(0.20);
        let r = window_ratio(&low, 0.06).unwrap();
        assert!((r - 0.2893).abs() < 1e-3, "{r}");
        assert!(r < 1.0);
        let m = cfg.cell_model().unwrap();
        let r = window_ratio(&cfg, cfg.env.vdd).unwrap();
        assert!(rel(r, 1.0 / 256.0 + m.alpha(0.1875)) < 1e-12);
        assert!(window_ratio(&cfg, -0.01).is_err());
    }

    #[test]
    fn sensing_window_examples() {
        let cfg = ColumnConfig::default();
        let w = sensing_window(&cfg, 0.0).unwrap();
        let r = window_ratio(&cfg, 0.0).unwrap();
        assert!(rel(w.t_leak_min / w.t_r0_max, r) < 0.01);
        assert!(w.valid);
        assert!((w.beta_lower - 0.2523).abs() < 1e-3, "{}", w.beta_lower);
        // β = 0.45 as listed for 0.25 V is admissible.
        assert!(w.beta_lower < 0.45 && 0.45 < w.beta_upper);

        let w = sensing_window(&cfg.with_vdd(0.2), 0.06).unwrap();
        assert!(!w.valid);
        assert!(w.beta_lower > 1.0);
    }

    #[test]
    fn linear_in_depth() {
        let base = ColumnConfig::default();
        let mut per_cell = Vec::new();
        for n in [64usize, 128, 256, 512] {
            let cfg = base.with_depth(n);
            let p = DataPattern::with_zero_count(n, n / 2, None).unwrap();
            per_cell.push(column_leakage(&cfg, &p, 0.1875).unwrap() / n as f64);
        }
        for w in per_cell.windows(2) {
            assert!(rel(w[1], w[0]) < 1e-9);
        }
    }

    #[test]
    fn leakage_monotone_in_r01_vdd_temperature() {
        let base = ColumnConfig::default();
        let mut last = 0.0;
        for zeros in [0usize, 64, 128, 192, 256] {
            let p = DataPattern::with_zero_count(256, zeros, None).unwrap();
            let l = column_leakage(&base, &p, 0.1875).unwrap();
            assert!(l > last);
            last = l;
        }
        let p = DataPattern::with_zero_count(256, 128, None).unwrap();
        let mut last = 0.0;
        for vdd in [0.25, 0.3, 0.35, 0.4, 0.45] {
            let c = base.with_vdd(vdd);
            let l = column_leakage(&c, &p, c.eval_voltage()).unwrap();
            assert!(l > last);
            last = l;
        }
        let mut last = 0.0;
        for t in [250.0, 275.0, 300.0, 325.0, 350.0] {
            let c = base.with_temperature(t);
            let l = column_leakage(&c, &p, c.eval_voltage()).unwrap();
            assert!(l > last);
            last = l;
        }
    }

    #[test]
    fn window_trends() {
        let base = ColumnConfig::default();
        for t in [250.0, 275.0, 300.0, 325.0, 350.0] {
            let mut last = 0.0;
            for vdd in [0.25, 0.3, 0.35, 0.4, 0.45] {
                let r = window_ratio(&base.with_vdd(vdd).with_temperature(t), 0.0).unwrap();
                assert!(r > last);
                last = r;
            }
        }
        for vdd in [0.25, 0.3, 0.35, 0.4, 0.45] {
            let mut last = f64::INFINITY;
            for t in [250.0, 275.0, 300.0, 325.0, 350.0] {
                let r = window_ratio(&base.with_vdd(vdd).with_temperature(t), 0.0).unwrap();
                assert!(r < last);
                last = r;
            }
        }
    }

    #[test]
    fn extremes_bound_every_pattern() {
        for vdd in [0.25, 0.3, 0.35, 0.4, 0.45] {
            let cfg = ColumnConfig::default().with_vdd(vdd);
            let w = sensing_window(&cfg, 0.0).unwrap();
            assert!(w.valid);
            for pct in [0usize, 25, 50, 75, 100] {
                let zeros = 255 * pct / 100;
                // Row 0 is the accessed '0'; idle rows 1..=zeros also store '0'.
                let r0 = DataPattern::with_zero_count(256, zeros + 1, Some(0)).unwrap();
                assert!(t_read0(&cfg, &r0, cfg.params.vth0).unwrap() <= w.t_r0_max);
                let r1 = DataPattern::new(
                    (0..256).map(|i| i == 0 || i > zeros).collect::<Vec<_>>(),
                    Some(0),
                )
                .unwrap();
                let tl = t_leak(&cfg, &r1).unwrap();
                if let Some(tl) = tl.seconds() {
                    assert!(tl >= w.t_leak_min);
                }
            }
        }
    }
}
