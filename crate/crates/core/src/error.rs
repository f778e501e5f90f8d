use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("step size {dt} s outside stable range (0, {max}] s")]
    StepSize { dt: f64, max: f64 },

    #[error("recording too large: {0}")]
    Size(String),

    #[error("noise-estimation block has {len} samples, need at least {min}")]
    BlockTooShort { len: usize, min: usize },

    #[error("degenerate event: window is all zeros")]
    DegenerateEvent,

    #[error("non-finite feature {index} ({value})")]
    Quantization { index: usize, value: f64 },

    #[error("capacity exceeded: need {required} bits, {available} available")]
    Capacity { required: u64, available: u64 },

    #[error("table invariant violated: {0}")]
    Invariant(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("input not sorted by sample index: {0}")]
    Unsorted(&'static str),

    #[error("dataset integrity: {0}")]
    Integrity(String),

    #[error("cannot compare: {0}")]
    Comparison(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
