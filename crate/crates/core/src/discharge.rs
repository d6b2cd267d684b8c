//! Time-domain bitline discharge, `C·dV/dt = −I(V)`, by implicit trapezoidal
//! stepping.
//!
//! Unlike the closed forms in [`crate::column`], every cell current is
//! re-evaluated at the instantaneous bitline voltage. This module is the
//! oracle for those closed forms and the waveform engine behind test-mode
//! measurement and read simulation.

use crate::column::{ColumnConfig, DataPattern, DischargeTime};
use crate::device::CellModel;
use crate::error::{Error, Result};

/// Steps per estimated crossing time that a caller must at least resolve.
pub const MIN_STEPS_PER_CROSSING: f64 = 100.0;

const MAX_STEPS: usize = 50_000_000;

/// Lumped current of a column as a function of bitline voltage.
///
/// Cells are grouped by bias condition; each group's weight is the sum of
/// its members' gate factors, so the cost of evaluating `I(V)` is
/// independent of column depth.
#[derive(Debug, Clone, Copy)]
pub struct ColumnCurrents {
    model: CellModel,
    /// Devices leaking like an idle '0' cell.
    zero_weight: f64,
    /// Idle '1' cells (scaled by `α(V)`).
    one_weight: f64,
    /// Accessed '0' cells, already multiplied by the on/off ratio.
    read_weight: f64,
}

impl ColumnCurrents {
    pub fn new(model: CellModel, zero_weight: f64, one_weight: f64, read_weight: f64) -> Self {
        ColumnCurrents {
            model,
            zero_weight,
            one_weight,
            read_weight,
        }
    }

    /// Groups the cells of `pattern`, taking thresholds from `vth` or the
    /// nominal `vth0` when absent.
    ///
    /// An accessed cell storing '1' conducts only the cutoff current of its
    /// read stack, which is neglected next to the idle leakage.
    pub fn from_pattern(model: CellModel, pattern: &DataPattern, vth: Option<&[f64]>) -> Self {
        let vth0 = model.params().vth0;
        let on_off = model.on_off_ratio();
        let mut zero = 0.0;
        let mut one = 0.0;
        let mut read = 0.0;
        for (i, &bit) in pattern.bits().iter().enumerate() {
            let g = model.gate_factor(vth.map_or(vth0, |v| v[i]));
            match (Some(i) == pattern.accessed_row(), bit) {
                (true, false) => read += on_off * g,
                (true, true) => {}
                (false, false) => zero += g,
                (false, true) => one += g,
            }
        }
        ColumnCurrents::new(model, zero, one, read)
    }

    pub fn model(&self) -> &CellModel {
        &self.model
    }

    #[inline]
    pub fn current(&self, v: f64) -> f64 {
        let m = &self.model;
        m.drain_factor(v) * (self.zero_weight + self.read_weight + m.alpha(v) * self.one_weight)
    }

    /// `dI/dV`.
    #[inline]
    pub fn slope(&self, v: f64) -> f64 {
        let m = &self.model;
        let vt = m.thermal_voltage();
        let b = m.params().lambda / m.slope();
        let c = (1.0 + m.params().lambda) / (2.0 * m.slope());
        let e = (b * v).exp();
        let d = e * -(-v / vt).exp_m1();
        let dd = b * d + e * (-v / vt).exp() / vt;
        let a = m.alpha(v);
        let w = self.zero_weight + self.read_weight + a * self.one_weight;
        dd * w - d * c * a * self.one_weight
    }

    pub fn is_zero(&self) -> bool {
        self.zero_weight + self.one_weight + self.read_weight == 0.0
    }
}

/// A bitline released from `v_start` at `t = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Discharge {
    currents: ColumnCurrents,
    c_rbl: f64,
    v_start: f64,
    v_ref: f64,
}

impl Discharge {
    pub fn new(currents: ColumnCurrents, c_rbl: f64, v_start: f64, v_ref: f64) -> Result<Self> {
        if !(c_rbl > 0.0) {
            return Err(Error::domain("c_rbl", format!("{c_rbl} F is not positive")));
        }
        if !(v_ref < v_start && v_ref >= 0.0) {
            return Err(Error::domain(
                "v_ref",
                format!("{v_ref} V must lie in [0, {v_start}) V"),
            ));
        }
        Ok(Discharge {
            currents,
            c_rbl,
            v_start,
            v_ref,
        })
    }

    /// Column precharged to `VDD`, sensed against `VREF`.
    pub fn for_column(
        cfg: &ColumnConfig,
        pattern: &DataPattern,
        vth: Option<&[f64]>,
    ) -> Result<Self> {
        cfg.validate()?;
        if pattern.depth() != cfg.depth {
            return Err(Error::config(
                "column.depth",
                format!(
                    "pattern has {} cells, column {}",
                    pattern.depth(),
                    cfg.depth
                ),
            ));
        }
        if let Some(v) = vth {
            if v.len() != cfg.depth {
                return Err(Error::Usage(format!(
                    "threshold map has {} entries for {} cells",
                    v.len(),
                    cfg.depth
                )));
            }
        }
        let currents = ColumnCurrents::from_pattern(cfg.cell_model()?, pattern, vth);
        Discharge::new(currents, cfg.c_rbl, cfg.env.vdd, cfg.v_ref)
    }

    pub fn currents(&self) -> &ColumnCurrents {
        &self.currents
    }

    pub fn v_start(&self) -> f64 {
        self.v_start
    }

    pub fn v_ref(&self) -> f64 {
        self.v_ref
    }

    /// Constant-current crossing estimate at the midpoint of the swing.
    pub fn estimate(&self) -> DischargeTime {
        let i = self.currents.current(0.5 * (self.v_start + self.v_ref));
        if i > 0.0 {
            DischargeTime::Finite(self.c_rbl * (self.v_start - self.v_ref) / i)
        } else {
            DischargeTime::Never
        }
    }

    /// Largest step accepted by [`Discharge::stepper`].
    pub fn max_step(&self) -> f64 {
        match self.estimate() {
            DischargeTime::Finite(t) => t / MIN_STEPS_PER_CROSSING,
            DischargeTime::Never => f64::INFINITY,
        }
    }

    /// Step size giving `steps` steps per estimated crossing time.
    pub fn step_for(&self, steps: f64) -> f64 {
        match self.estimate() {
            DischargeTime::Finite(t) => t / steps,
            DischargeTime::Never => 1.0,
        }
    }

    pub fn stepper(&self, dt: f64) -> Result<Stepper<'_>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(
                "dt",
                format!("{dt} s is not a positive step"),
            ));
        }
        let limit = self.max_step();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Accuracy { dt, limit });
        }
        Ok(Stepper {
            d: self,
            dt,
            t: 0.0,
            v: self.v_start,
            crossing: None,
        })
    }

    /// One implicit trapezoidal step of length `h` from `v`.
    fn step(&self, v: f64, h: f64) -> f64 {
        let k = h / (2.0 * self.c_rbl);
        let i0 = self.currents.current(v);
        // Explicit Euler predictor, Newton corrector.
        let mut x = (v - 2.0 * k * i0).max(0.0);
        for _ in 0..20 {
            let f = x - v + k * (i0 + self.currents.current(x));
            let fp = 1.0 + k * self.currents.slope(x);
            let next = (x - f / fp).max(0.0);
            let done = (next - x).abs() <= 1e-15 + 1e-13 * x.abs();
            x = next;
            if done {
                break;
            }
        }
        x
    }
}

/// Marching state of a [`Discharge`].
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    d: &'a Discharge,
    dt: f64,
    t: f64,
    v: f64,
    crossing: Option<f64>,
}

impl Stepper<'_> {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn voltage(&self) -> f64 {
        self.v
    }

    /// First time the bitline reached `VREF`, linearly interpolated.
    pub fn crossing(&self) -> Option<f64> {
        self.crossing
    }

    fn advance(&mut self, h: f64) {
        let v_next = self.d.step(self.v, h);
        if self.crossing.is_none() && v_next <= self.d.v_ref {
            let frac = (self.v - self.d.v_ref) / (self.v - v_next);
            self.crossing = Some(self.t + frac * h);
        }
        self.v = v_next;
        self.t += h;
    }

    /// One nominal step.
    pub fn step(&mut self) {
        self.advance(self.dt);
    }

    /// Marches to exactly `t_target`, shortening the last step.
    pub fn advance_to(&mut self, t_target: f64) {
        while self.t < t_target {
            let h = self.dt.min(t_target - self.t);
            if h <= self.dt * 1e-9 {
                self.t = t_target;
                break;
            }
            self.advance(h);
        }
    }

    /// Marches towards `t_limit` but stops at the first step where the
    /// bitline is at or below `level`. Returns the interpolated time at which
    /// `level` was reached, or `None` if the bitline stayed above it.
    ///
    /// The bitline only ever discharges, so a comparator that trips before
    /// `t_limit` would also trip at `t_limit`.
    pub fn advance_until_below(&mut self, level: f64, t_limit: f64) -> Option<f64> {
        if self.v <= level {
            return Some(self.t);
        }
        while self.t < t_limit {
            let h = self.dt.min(t_limit - self.t);
            if h <= self.dt * 1e-9 {
                self.t = t_limit;
                break;
            }
            let (t0, v0) = (self.t, self.v);
            self.advance(h);
            if self.v <= level {
                return Some(t0 + h * (v0 - level) / (v0 - self.v));
            }
        }
        None
    }
}

/// Sampled bitline waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub volts: Vec<f64>,
    /// First crossing of `VREF`, if any.
    pub crossing: Option<f64>,
}

/// Integrates one column from precharge until it crosses `VREF`.
///
/// `dt` must resolve the constant-current crossing estimate of this column
/// with at least 100 steps. A column with no discharge path returns a flat
/// 100-step waveform at `VDD`.
pub fn integrate_discharge(
    cfg: &ColumnConfig,
    pattern: &DataPattern,
    vth: Option<&[f64]>,
    dt: f64,
) -> Result<Trajectory> {
    let d = Discharge::for_column(cfg, pattern, vth)?;
    let mut s = d.stepper(dt)?;
    let mut times = vec![0.0];
    let mut volts = vec![s.voltage()];
    let flat = d.currents().is_zero();
    for n in 0..MAX_STEPS {
        if flat && n == 100 {
            break;
        }
        s.step();
        times.push(s.time());
        volts.push(s.voltage());
        if s.crossing().is_some() {
            break;
        }
    }
    Ok(Trajectory {
        times,
        volts,
        crossing: s.crossing(),
    })
}
