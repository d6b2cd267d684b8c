//! Sub-threshold drain-current model of the 8T read port.
//!
//! Every current in the read path is an instance of the weak-inversion
//! expression
//!
//! ```text
//! Ids = I0 · exp((Vgs − Vth)/(n·vt)) · exp(λ·Vds/(n·vt)) · (1 − exp(−Vds/vt))
//! ```
//!
//! evaluated with different gate and drain biases: an idle '0' cell leaks with
//! `Vgs = 0`, an idle '1' cell leaks through two stacked off devices, and an
//! accessed '0' cell conducts with `Vgs = VDD`.

use crate::error::{Error, Result};

/// Boltzmann constant (J/K), exact SI value.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge (C), exact SI value.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Temperature at which `vth0` is specified.
pub const REFERENCE_TEMPERATURE: f64 = 300.0;

/// Thermal voltage `kT/q` in volts.
pub fn thermal_voltage(temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::domain(
            "temperature",
            format!("{temperature} K is not a positive absolute temperature"),
        ));
    }
    Ok(BOLTZMANN * temperature / ELEMENTARY_CHARGE)
}

/// Constants of the sub-threshold transistor model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    /// Pre-exponential current scale (A).
    pub i0: f64,
    /// Nominal threshold voltage at 300 K (V).
    pub vth0: f64,
    /// Sub-threshold slope factor.
    pub n: f64,
    /// DIBL coefficient.
    pub lambda: f64,
    /// Linear threshold drift with temperature (V/K). Zero disables it.
    pub vth_tempco: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            i0: 1e-7,
            vth0: 0.35,
            n: 1.4,
            lambda: 0.1,
            vth_tempco: -1e-3,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(Error::config("device.i0", "must be a positive current"));
        }
        if !(self.vth0 > 0.0 && self.vth0.is_finite()) {
            return Err(Error::config("device.vth0", "must be positive"));
        }
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(Error::config("device.n", "slope factor must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda < 1.0) {
            return Err(Error::config("device.lambda", "must lie in [0, 1)"));
        }
        if !self.vth_tempco.is_finite() {
            return Err(Error::config("device.vth_tempco", "must be finite"));
        }
        Ok(())
    }

    /// Threshold after applying the temperature drift to a 300 K value.
    pub fn effective_vth(&self, vth: f64, temperature: f64) -> f64 {
        vth + self.vth_tempco * (temperature - REFERENCE_TEMPERATURE)
    }
}

/// Supply voltage and die temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub vdd: f64,
    /// Kelvin.
    pub temperature: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            vdd: 0.25,
            temperature: REFERENCE_TEMPERATURE,
        }
    }
}

impl Environment {
    pub fn new(vdd: f64, temperature: f64) -> Result<Self> {
        let env = Environment { vdd, temperature };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0 && self.vdd <= 1.0) {
            return Err(Error::config(
                "env.vdd",
                format!("{} V not in (0, 1.0]", self.vdd),
            ));
        }
        if !(200.0..=400.0).contains(&self.temperature) {
            return Err(Error::config(
                "env.temperature",
                format!("{} K not in [200, 400]", self.temperature),
            ));
        }
        Ok(())
    }
}

/// Drain current of one transistor.
///
/// `vth` is the 300 K threshold of this particular device (nominal or
/// variation-sampled); the temperature drift is applied here.
pub fn ids(params: &DeviceParams, vgs: f64, vds: f64, vth: f64, temperature: f64) -> Result<f64> {
    if !(vds >= 0.0) {
        return Err(Error::domain("vds", format!("{vds} V is negative")));
    }
    let vt = thermal_voltage(temperature)?;
    let nvt = params.n * vt;
    let vth = params.effective_vth(vth, temperature);
    Ok(params.i0
        * ((vgs - vth) / nvt).exp()
        * (params.lambda * vds / nvt).exp()
        * -(-vds / vt).exp_m1())
}

/// Pre-evaluated model for one (device, environment) pair.
///
/// Currents factor into a gate part that depends only on the device threshold
/// and a drain part that depends only on the bitline voltage, which lets the
/// column integrator collapse hundreds of cells into two sums.
#[derive(Debug, Clone, Copy)]
pub struct CellModel {
    params: DeviceParams,
    env: Environment,
    vt: f64,
    nvt: f64,
}

impl CellModel {
    pub fn new(params: &DeviceParams, env: &Environment) -> Result<Self> {
        let vt = thermal_voltage(env.temperature)?;
        Ok(CellModel {
            params: *params,
            env: *env,
            vt,
            nvt: params.n * vt,
        })
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn thermal_voltage(&self) -> f64 {
        self.vt
    }

    /// `n·vt`, the exponential slope of the gate term.
    pub fn slope(&self) -> f64 {
        self.nvt
    }

    /// `I0·exp(−Vth_eff/(n·vt))` for a device with 300 K threshold `vth`.
    #[inline]
    pub fn gate_factor(&self, vth: f64) -> f64 {
        let vth = self.params.effective_vth(vth, self.env.temperature);
        self.params.i0 * (-vth / self.nvt).exp()
    }

    /// `exp(λ·V/(n·vt))·(1 − exp(−V/vt))`.
    #[inline]
    pub fn drain_factor(&self, v: f64) -> f64 {
        (self.params.lambda * v / self.nvt).exp() * -(-v / self.vt).exp_m1()
    }

    /// Ratio of idle-'1' to idle-'0' leakage at bitline voltage `v`.
    #[inline]
    pub fn alpha(&self, v: f64) -> f64 {
        (-(1.0 + self.params.lambda) * v / (2.0 * self.nvt)).exp()
    }

    /// `exp(VDD/(n·vt))`, the on/off ratio of the read port.
    pub fn on_off_ratio(&self) -> f64 {
        (self.env.vdd / self.nvt).exp()
    }

    #[inline]
    pub fn leak_zero(&self, v: f64, vth: f64) -> f64 {
        self.gate_factor(vth) * self.drain_factor(v)
    }

    #[inline]
    pub fn leak_one(&self, v: f64, vth: f64) -> f64 {
        self.alpha(v) * self.leak_zero(v, vth)
    }

    #[inline]
    pub fn read_zero(&self, v: f64, vth: f64) -> f64 {
        (self.env.vdd / self.nvt).exp() * self.leak_zero(v, vth)
    }

    fn check_rbl(&self, v_rbl: f64) -> Result<()> {
        if !(0.0..=self.env.vdd).contains(&v_rbl) {
            return Err(Error::domain(
                "v_rbl",
                format!("{v_rbl} V outside [0, {}] V", self.env.vdd),
            ));
        }
        Ok(())
    }
}

/// Leakage of an idle cell storing '0': the read-port source sits at ground,
/// so the off device sees the full bitline voltage across it.
pub fn leak_zero_cell(params: &DeviceParams, env: &Environment, v_rbl: f64) -> Result<f64> {
    let m = CellModel::new(params, env)?;
    m.check_rbl(v_rbl)?;
    Ok(m.leak_zero(v_rbl, params.vth0))
}

/// Leakage of an idle cell storing '1'.
///
/// The internal node floats near `V_RBL/2`, which lowers `Vgs` and raises the
/// source of the access device. Dropping the transregional term collapses the
/// expression to `alpha_ratio · leak_zero_cell`, which is what is computed.
pub fn leak_one_cell(params: &DeviceParams, env: &Environment, v_rbl: f64) -> Result<f64> {
    let m = CellModel::new(params, env)?;
    m.check_rbl(v_rbl)?;
    Ok(m.leak_one(v_rbl, params.vth0))
}

/// `exp(−(1+λ)·V_RBL/(2·n·vt))`.
pub fn alpha_ratio(params: &DeviceParams, env: &Environment, v_rbl: f64) -> Result<f64> {
    if !(v_rbl >= 0.0) {
        return Err(Error::domain("v_rbl", format!("{v_rbl} V is negative")));
    }
    Ok(CellModel::new(params, env)?.alpha(v_rbl))
}

/// On-current of an accessed cell storing '0' (`Vgs = VDD`).
pub fn read_current(
    params: &DeviceParams,
    env: &Environment,
    v_rbl: f64,
    vth_sample: f64,
) -> Result<f64> {
    let m = CellModel::new(params, env)?;
    m.check_rbl(v_rbl)?;
    Ok(m.read_zero(v_rbl, vth_sample))
}
