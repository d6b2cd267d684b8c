//! Run configuration: a flat `key = value` file.
//!
//! ```text
//! file    := { line }
//! line    := [ key "=" value ] [ "#" comment ] NEWLINE
//! key     := section "." name | "seed" | "trials"
//! value   := number | word | list
//! list    := item { "," item }
//! ```
//!
//! Every key is optional. Omitted keys take the defaults listed by
//! [`RunConfig::default`] and each applied default is logged at info level.
//! After the file, environment variables named `LEAKSENSE_` followed by the
//! upper-cased key with `.` replaced by `_` (for example
//! `LEAKSENSE_ENV_VDD`) override individual keys.

use std::collections::BTreeSet;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::calibration::CalibSettings;
use crate::column::ColumnConfig;
use crate::device::{DeviceParams, Environment};
use crate::error::{Error, Result};
use crate::peripherals::{ReplicaConfig, SosaModel};
use crate::read_sim::{BankState, DEFAULT_T_RWL_FACTOR};
use crate::variation::{SweepGrid, VariationModel};

pub const ENV_PREFIX: &str = "LEAKSENSE_";

/// Bank contents used when `simulate` runs without a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pattern {
    #[default]
    Checkerboard,
    /// Row 0 stores '1', every other row '0'.
    WorstOne,
    /// Row 0 stores '0', every other row '1'.
    WorstZero,
    Zeros,
    Ones,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::Checkerboard => "checkerboard",
            Pattern::WorstOne => "worst_one",
            Pattern::WorstZero => "worst_zero",
            Pattern::Zeros => "zeros",
            Pattern::Ones => "ones",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Pattern::Checkerboard,
            Pattern::WorstOne,
            Pattern::WorstZero,
            Pattern::Zeros,
            Pattern::Ones,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    pub fn bank(self, rows: usize) -> Result<BankState> {
        match self {
            Pattern::Checkerboard => BankState::checkerboard(rows),
            Pattern::WorstOne => BankState::worst_case(rows, 0, true, false),
            Pattern::WorstZero => BankState::worst_case(rows, 0, false, true),
            Pattern::Zeros => BankState::new(rows),
            Pattern::Ones => BankState::from_fn(rows, |_, _| u64::MAX),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: DeviceParams,
    pub env: Environment,
    pub depth: usize,
    pub c_rbl: f64,
    /// `VREF / VDD`.
    pub v_ref_ratio: f64,
    pub model: VariationModel,
    pub replica: ReplicaConfig,
    pub sosa: SosaModel,
    pub calib: CalibSettings,
    pub vdd_list: Vec<f64>,
    pub t_rwl_factor: f64,
    pub pattern: Pattern,
    pub sweep: SweepGrid,
    pub clock_vdd: Vec<f64>,
    pub out_dir: PathBuf,
}

fn supply_grid() -> Vec<f64> {
    vec![0.2, 0.25, 0.3, 0.35, 0.4, 0.45]
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: DeviceParams::default(),
            env: Environment {
                vdd: 0.4,
                ..Environment::default()
            },
            depth: crate::column::DEFAULT_DEPTH,
            c_rbl: crate::column::DEFAULT_C_RBL,
            v_ref_ratio: 0.5,
            model: VariationModel::default(),
            replica: ReplicaConfig::default(),
            sosa: SosaModel::default(),
            calib: CalibSettings::default(),
            vdd_list: supply_grid(),
            t_rwl_factor: DEFAULT_T_RWL_FACTOR,
            pattern: Pattern::Checkerboard,
            sweep: SweepGrid {
                vdd: supply_grid(),
                temperature: vec![300.0],
                depth: vec![256],
                r01: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            },
            clock_vdd: supply_grid(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "device.i0",
    "device.vth0",
    "device.n",
    "device.lambda",
    "device.vth_tempco",
    "env.vdd",
    "env.temperature",
    "column.depth",
    "column.c_rbl",
    "column.v_ref_ratio",
    "variation.sigma_vth",
    "variation.sigma_os",
    "variation.dvth_sigmas",
    "seed",
    "trials",
    "replica.depth",
    "replica.rc_count",
    "replica.dc_count",
    "replica.c_rbl",
    "replica.v_trip",
    "replica.switch_overhead",
    "sosa.phases",
    "calib.counter_max",
    "calib.margin",
    "calib.vdd_list",
    "read.t_rwl_factor",
    "read.pattern",
    "sweep.vdd",
    "sweep.temperature",
    "sweep.depth",
    "sweep.r01",
    "clock.vdd",
    "output.dir",
];

/// Keys that change calibration results. Their values form the table hash.
const CALIBRATION_KEYS: &[&str] = &[
    "device.i0",
    "device.vth0",
    "device.n",
    "device.lambda",
    "device.vth_tempco",
    "env.temperature",
    "column.depth",
    "column.c_rbl",
    "column.v_ref_ratio",
    "variation.sigma_vth",
    "variation.sigma_os",
    "variation.dvth_sigmas",
    "seed",
    "trials",
    "replica.depth",
    "replica.rc_count",
    "replica.dc_count",
    "replica.c_rbl",
    "replica.v_trip",
    "replica.switch_overhead",
    "sosa.phases",
    "calib.counter_max",
    "calib.margin",
];

fn f64_text(v: f64) -> String {
    format!("{v:?}")
}

fn list_text<T: Copy>(xs: &[T], f: impl Fn(T) -> String) -> String {
    xs.iter().map(|&x| f(x)).collect::<Vec<_>>().join(",")
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "empty list"));
    }
    Ok(items)
}

impl RunConfig {
    /// Column model at `env`.
    pub fn column(&self) -> ColumnConfig {
        ColumnConfig {
            depth: self.depth,
            c_rbl: self.c_rbl,
            v_ref: self.v_ref_ratio * self.env.vdd,
            env: self.env,
            params: self.params,
            eval_point: Default::default(),
        }
    }

    /// Sense-amplifier model with the run's offset spread.
    pub fn sosa(&self) -> SosaModel {
        SosaModel {
            sigma_os: self.model.sigma_os,
            ..self.sosa
        }
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "device.i0" => f64_text(self.params.i0),
            "device.vth0" => f64_text(self.params.vth0),
            "device.n" => f64_text(self.params.n),
            "device.lambda" => f64_text(self.params.lambda),
            "device.vth_tempco" => f64_text(self.params.vth_tempco),
            "env.vdd" => f64_text(self.env.vdd),
            "env.temperature" => f64_text(self.env.temperature),
            "column.depth" => self.depth.to_string(),
            "column.c_rbl" => f64_text(self.c_rbl),
            "column.v_ref_ratio" => f64_text(self.v_ref_ratio),
            "variation.sigma_vth" => f64_text(self.model.sigma_vth),
            "variation.sigma_os" => f64_text(self.model.sigma_os),
            "variation.dvth_sigmas" => f64_text(self.model.dvth_sigmas),
            "seed" => self.model.seed.to_string(),
            "trials" => self.model.trials.to_string(),
            "replica.depth" => self.replica.depth.to_string(),
            "replica.rc_count" => self.replica.rc_count.to_string(),
            "replica.dc_count" => self.replica.dc_count.to_string(),
            "replica.c_rbl" => f64_text(self.replica.c_rbl),
            "replica.v_trip" => self.replica.v_trip.map_or("auto".into(), f64_text),
            "replica.switch_overhead" => f64_text(self.replica.switch_overhead),
            "sosa.phases" => list_text(&self.sosa.phases, |p| p.to_string()),
            "calib.counter_max" => self.calib.counter_max.to_string(),
            "calib.margin" => f64_text(self.calib.margin),
            "calib.vdd_list" => list_text(&self.vdd_list, f64_text),
            "read.t_rwl_factor" => f64_text(self.t_rwl_factor),
            "read.pattern" => self.pattern.name().into(),
            "sweep.vdd" => list_text(&self.sweep.vdd, f64_text),
            "sweep.temperature" => list_text(&self.sweep.temperature, f64_text),
            "sweep.depth" => list_text(&self.sweep.depth, |d| d.to_string()),
            "sweep.r01" => list_text(&self.sweep.r01, f64_text),
            "clock.vdd" => list_text(&self.clock_vdd, f64_text),
            "output.dir" => self.out_dir.display().to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "device.i0" => self.params.i0 = num(key, v)?,
            "device.vth0" => self.params.vth0 = num(key, v)?,
            "device.n" => self.params.n = num(key, v)?,
            "device.lambda" => self.params.lambda = num(key, v)?,
            "device.vth_tempco" => self.params.vth_tempco = num(key, v)?,
            "env.vdd" => self.env.vdd = num(key, v)?,
            "env.temperature" => self.env.temperature = num(key, v)?,
            "column.depth" => self.depth = num(key, v)?,
            "column.c_rbl" => self.c_rbl = num(key, v)?,
            "column.v_ref_ratio" => self.v_ref_ratio = num(key, v)?,
            "variation.sigma_vth" => self.model.sigma_vth = num(key, v)?,
            "variation.sigma_os" => self.model.sigma_os = num(key, v)?,
            "variation.dvth_sigmas" => self.model.dvth_sigmas = num(key, v)?,
            "seed" => self.model.seed = num(key, v)?,
            "trials" => self.model.trials = num(key, v)?,
            "replica.depth" => self.replica.depth = num(key, v)?,
            "replica.rc_count" => self.replica.rc_count = num(key, v)?,
            "replica.dc_count" => self.replica.dc_count = num(key, v)?,
            "replica.c_rbl" => self.replica.c_rbl = num(key, v)?,
            "replica.v_trip" => {
                self.replica.v_trip = if v == "auto" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "replica.switch_overhead" => self.replica.switch_overhead = num(key, v)?,
            "sosa.phases" => {
                let p: Vec<u32> = list(key, v)?;
                self.sosa.phases = p
                    .try_into()
                    .map_err(|_| Error::config(key, "expected three phase lengths"))?;
            }
            "calib.counter_max" => self.calib.counter_max = num(key, v)?,
            "calib.margin" => self.calib.margin = num(key, v)?,
            "calib.vdd_list" => self.vdd_list = list(key, v)?,
            "read.t_rwl_factor" => self.t_rwl_factor = num(key, v)?,
            "read.pattern" => {
                self.pattern = Pattern::parse(v)
                    .ok_or_else(|| Error::config(key, format!("unknown pattern `{v}`")))?
            }
            "sweep.vdd" => self.sweep.vdd = list(key, v)?,
            "sweep.temperature" => self.sweep.temperature = list(key, v)?,
            "sweep.depth" => self.sweep.depth = list(key, v)?,
            "sweep.r01" => self.sweep.r01 = list(key, v)?,
            "clock.vdd" => self.clock_vdd = list(key, v)?,
            "output.dir" => {
                if v.is_empty() {
                    return Err(Error::config(key, "empty path"));
                }
                self.out_dir = PathBuf::from(v)
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks every sub-configuration at the operating point and at every
    /// supply a command may visit.
    pub fn validate(&self) -> Result<()> {
        if !(self.v_ref_ratio > 0.0 && self.v_ref_ratio < 1.0) {
            return Err(Error::config("column.v_ref_ratio", "must lie in (0, 1)"));
        }
        self.column().validate()?;
        self.model.validate()?;
        self.sosa().validate()?;
        self.calib.validate()?;
        self.replica.validate(self.env.vdd, self.params.vth0)?;
        if !(self.t_rwl_factor >= 0.0 && self.t_rwl_factor.is_finite()) {
            return Err(Error::config("read.t_rwl_factor", "must be >= 0"));
        }
        let supplies = [
            ("calib.vdd_list", &self.vdd_list),
            ("sweep.vdd", &self.sweep.vdd),
            ("clock.vdd", &self.clock_vdd),
        ];
        for (key, list) in supplies {
            for &v in list.iter() {
                Environment::new(v, self.env.temperature)
                    .map_err(|e| Error::config(key, format!("{v}: {e}")))?;
            }
        }
        for &t in &self.sweep.temperature {
            Environment::new(self.env.vdd, t)
                .map_err(|e| Error::config("sweep.temperature", format!("{t}: {e}")))?;
        }
        for &d in &self.sweep.depth {
            if d == 0 || d > crate::column::MAX_DEPTH {
                return Err(Error::config(
                    "sweep.depth",
                    format!("{d} not in 1..={}", crate::column::MAX_DEPTH),
                ));
            }
        }
        for &r in &self.sweep.r01 {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config("sweep.r01", format!("{r} not in [0, 1]")));
            }
        }
        Ok(())
    }

    /// `key = value` lines for every key. Parsing the output reproduces the
    /// configuration exactly.
    pub fn serialize(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("registered key")))
            .collect()
    }

    /// SHA-256 over the calibration-relevant keys, lower-case hex.
    pub fn calibration_hash(&self) -> String {
        let mut h = Sha256::new();
        for k in CALIBRATION_KEYS {
            h.update(format!("{k} = {}\n", self.get(k).expect("registered key")));
        }
        hex::encode(h.finalize())
    }

    /// Parses `text` on top of the defaults, then applies overrides from
    /// `env_lookup` (called with the full variable name).
    pub fn parse_with(
        text: &str,
        path: &str,
        env_lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: n + 1,
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: n + 1,
                    reason: format!("duplicate key `{k}`"),
                });
            }
            cfg.set(k, v)?;
        }
        for k in KEYS {
            let var = env_var_name(k);
            if let Some(v) = env_lookup(&var) {
                log::info!("{var} overrides {k} = {v}");
                cfg.set(k, &v)?;
                seen.insert(k.to_string());
            }
        }
        for k in KEYS.iter().filter(|k| !seen.contains(**k)) {
            log::info!("default {k} = {}", cfg.get(k)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file with overrides from the process
    /// environment.
    pub fn parse_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse_with(&text, &path.display().to_string(), |k| {
            std::env::var(k).ok()
        })
    }
}

/// `LEAKSENSE_` plus the upper-cased key with dots as underscores.
pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}
