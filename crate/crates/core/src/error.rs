use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter record violates one of its invariants.
    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config key `{key}` (line {line}): {message}")]
    ConfigKey {
        key: String,
        line: usize,
        message: String,
    },

    #[error("signal contains no samples")]
    EmptySignal,

    #[error("time {t} s is outside the signal support [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("state became non-finite after t = {last_good_time} s")]
    NonFinite { last_good_time: f64 },

    #[error("step size {step:e} s underflowed at t = {t} s")]
    StepUnderflow { t: f64, step: f64 },

    #[error("averaging window after settle time {settle} s contains fewer than two samples")]
    WindowEmpty { settle: f64 },

    #[error("series too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::InvalidSpec(_)
                | Error::Parse { .. }
                | Error::ConfigKey { .. }
                | Error::EmptySignal
        )
    }
}
