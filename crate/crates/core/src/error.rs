use std::path::PathBuf;

/// Errors produced by the simulator, calibration and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of a physical model.
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A configuration value failed validation. `key` is the flat key path.
    #[error("invalid configuration at `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// The caller used an operation outside its contract.
    #[error("{0}")]
    Usage(String),

    /// The requested integration step cannot resolve the discharge.
    #[error("time step {dt:e} s too coarse for this discharge (limit {limit:e} s)")]
    Accuracy { dt: f64, limit: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
