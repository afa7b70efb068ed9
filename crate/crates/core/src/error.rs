use crate::experiment::CalibratedParameters;
use crate::qstate::StateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("time tags on channel stream are not sorted (index {0})")]
    Unsorted(usize),
    #[error("clock recovery needs at least 2 matched sync pulses, got {0}")]
    TooFewSyncPulses(usize),
    #[error("sync pulse count mismatch: ground {ground}, satellite {satellite}")]
    SyncMismatch { ground: usize, satellite: usize },
    #[error("calibration did not converge after {iterations} sweeps (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<CalibratedParameters>,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
