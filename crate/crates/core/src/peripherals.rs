//! Replica-column clock generator and sense-amplifier behavior.

use rayon::prelude::*;

use crate::column::DEFAULT_C_RBL;
use crate::device::{CellModel, DeviceParams, Environment};
use crate::discharge::{ColumnCurrents, Discharge};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::variation::{fill_vth, Summary, VariationModel};

/// Largest offset spread the sense amplifier is characterised for (V).
pub const SIGMA_OS_CAP: f64 = 0.0114;

/// Steps per estimated replica discharge.
const REPLICA_STEPS: f64 = 200.0;

/// Two replica columns that alternately discharge through `rc_count`
/// parallel readers storing '0'; the remaining dummy cells store '1'.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaConfig {
    pub depth: usize,
    pub rc_count: usize,
    pub dc_count: usize,
    pub c_rbl: f64,
    /// Switch trip level (V). `None` selects [`ReplicaConfig::trip_level`].
    pub v_trip: Option<f64>,
    /// Lumped switch-control delay as a fraction of the period.
    pub switch_overhead: f64,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        ReplicaConfig {
            depth: 256,
            rc_count: 64,
            dc_count: 192,
            c_rbl: DEFAULT_C_RBL,
            v_trip: None,
            switch_overhead: 0.05,
        }
    }
}

impl ReplicaConfig {
    /// Trip level at supply `vdd`: the replica bitline must fall far enough
    /// to turn on the PMOS sensing it, `vdd − vth0`, but never less than
    /// half the supply when `vdd` is below `2·vth0`.
    pub fn trip_level(&self, vdd: f64, vth0: f64) -> f64 {
        self.v_trip.unwrap_or_else(|| (vdd - vth0).max(0.5 * vdd))
    }

    pub fn validate(&self, vdd: f64, vth0: f64) -> Result<()> {
        if self.rc_count == 0 {
            return Err(Error::config(
                "replica.rc_count",
                "needs at least one replica cell",
            ));
        }
        if self.rc_count + self.dc_count != self.depth {
            return Err(Error::config(
                "replica.dc_count",
                format!(
                    "rc_count + dc_count = {} but depth = {}",
                    self.rc_count + self.dc_count,
                    self.depth
                ),
            ));
        }
        if !(self.c_rbl > 0.0) {
            return Err(Error::config("replica.c_rbl", "must be positive"));
        }
        let trip = self.trip_level(vdd, vth0);
        if !(trip > 0.0 && trip < vdd) {
            return Err(Error::config(
                "replica.v_trip",
                format!("{trip} V not in (0, vdd = {vdd} V)"),
            ));
        }
        if !(self.switch_overhead >= 0.0) {
            return Err(Error::config("replica.switch_overhead", "must be >= 0"));
        }
        Ok(())
    }

    fn half_period(&self, m: &CellModel, vth: &[f64]) -> Result<f64> {
        let (rc, dc) = vth.split_at(self.rc_count);
        let read = m.on_off_ratio() * rc.iter().map(|&v| m.gate_factor(v)).sum::<f64>();
        let idle = dc.iter().map(|&v| m.gate_factor(v)).sum::<f64>();
        let currents = ColumnCurrents::new(*m, 0.0, idle, read);
        let vdd = m.env().vdd;
        let d = Discharge::new(
            currents,
            self.c_rbl,
            vdd,
            self.trip_level(vdd, m.params().vth0),
        )?;
        let mut s = d.stepper(d.step_for(REPLICA_STEPS))?;
        s.advance_until_below(d.v_ref(), f64::INFINITY)
            .ok_or_else(|| Error::Usage("replica column never reaches the trip level".into()))
    }
}

/// Clock period of replica instance `instance`.
///
/// Each half-period is one replica column discharging from `VDD` to the trip
/// level; thresholds of both columns are drawn independently. The two
/// half-periods plus the switch overhead make one period.
pub fn clock_period(
    replica: &ReplicaConfig,
    params: &DeviceParams,
    env: &Environment,
    model: &VariationModel,
    instance: u64,
) -> Result<f64> {
    replica.validate(env.vdd, params.vth0)?;
    let m = CellModel::new(params, env)?;
    let rng = model.rng();
    let mut vth = vec![0.0; replica.depth];
    let mut total = 0.0;
    for col in 0..2u64 {
        if model.sigma_vth == 0.0 {
            vth.fill(params.vth0);
        } else {
            rng.fill_normals(
                Stream::ReplicaVth,
                instance,
                col * replica.depth as u64,
                &mut vth,
            );
            vth.iter_mut()
                .for_each(|v| *v = params.vth0 + model.sigma_vth * *v);
        }
        total += replica.half_period(&m, &vth)?;
    }
    Ok(total * (1.0 + replica.switch_overhead))
}

/// Clock period statistics over `model.trials` replica instances.
pub fn clock_stats(
    replica: &ReplicaConfig,
    params: &DeviceParams,
    env: &Environment,
    model: &VariationModel,
) -> Result<Summary> {
    model.validate()?;
    let periods = (0..model.trials as u64)
        .into_par_iter()
        .map(|k| clock_period(replica, params, env, model, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary::from_values(&periods))
}

/// Discharge time of one replica-like column with `readers` parallel cells,
/// sampled with the array's cell stream. Used to compare clock spread with
/// single-cell spread.
pub fn reader_discharge_time(
    replica: &ReplicaConfig,
    params: &DeviceParams,
    env: &Environment,
    model: &VariationModel,
    readers: usize,
    trial: u64,
) -> Result<f64> {
    let r = ReplicaConfig {
        rc_count: readers,
        dc_count: replica.depth.saturating_sub(readers),
        ..*replica
    };
    r.validate(env.vdd, params.vth0)?;
    let m = CellModel::new(params, env)?;
    let mut vth = vec![0.0; r.depth];
    fill_vth(model, &model.rng(), params.vth0, trial, 0, &mut vth);
    r.half_period(&m, &vth)
}

/// Offset-cancelled single-ended sense amplifier: phase lengths in clock
/// periods and input offset spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SosaModel {
    pub sigma_os: f64,
    /// Precharge, sampling and amplification phases.
    pub phases: [u32; 3],
}

impl Default for SosaModel {
    fn default() -> Self {
        SosaModel {
            sigma_os: SIGMA_OS_CAP,
            phases: [2, 2, 4],
        }
    }
}

impl SosaModel {
    pub fn validate(&self) -> Result<()> {
        if self.phases.contains(&0) {
            return Err(Error::config(
                "sosa.phases",
                "every phase needs at least one period",
            ));
        }
        if !(self.sigma_os >= 0.0) {
            return Err(Error::config("variation.sigma_os", "must be >= 0"));
        }
        Ok(())
    }

    pub fn periods(&self) -> u32 {
        self.phases.iter().sum()
    }
}

/// One sense activation, `(precharge + sample + amplify)·t_ck`.
pub fn sa_latency(sosa: &SosaModel, t_ck: f64) -> Result<f64> {
    sosa.validate()?;
    if !(t_ck > 0.0) {
        return Err(Error::domain(
            "t_ck",
            format!("{t_ck} s is not a positive period"),
        ));
    }
    Ok(f64::from(sosa.periods()) * t_ck)
}

/// Comparator decision: `true` reads '1'. A tie reads '1'.
#[inline]
pub fn sosa_sample(v_rbl: f64, v_ref: f64, offset: f64) -> bool {
    v_rbl + offset >= v_ref
}

/// Clock and sense timing at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub t_ck: f64,
    pub t_sa: f64,
}

/// Timing from the mean replica clock period over `model.trials` instances.
pub fn timing_at(
    replica: &ReplicaConfig,
    sosa: &SosaModel,
    params: &DeviceParams,
    env: &Environment,
    model: &VariationModel,
) -> Result<Timing> {
    let t_ck = clock_stats(replica, params, env, model)?.mean;
    Ok(Timing {
        t_ck,
        t_sa: sa_latency(sosa, t_ck)?,
    })
}
