use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SparcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SparcError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {msg}")]
    Format { what: String, msg: String },

    #[error("size mismatch in {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("duplicate stream name `{0}`")]
    DuplicateStream(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("range {start}..{end} out of bounds for {len} samples")]
    OutOfRange { start: usize, end: usize, len: usize },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
}

impl SparcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Format {
            what: what.into(),
            msg: msg.into(),
        }
    }

    /// True for numerical aborts (diverged loss, non-finite gradients).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::NonFinite { .. })
    }
}
