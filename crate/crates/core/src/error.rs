use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Prediction-error power became non-positive at the given recursion order.
    #[error("numerical degeneracy at order {order}: {context}")]
    NumericalDegeneracy { order: usize, context: String },

    #[error("non-finite activation in layer {layer} ({name})")]
    NumericOverflow { layer: usize, name: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse failure class, used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_)
            | Error::ShapeMismatch { .. }
            | Error::ContractViolation(_)
            | Error::UnsupportedFormat(_)
            | Error::RateMismatch { .. } => ErrorKind::InvalidArgument,
            Error::NumericalDegeneracy { .. }
            | Error::NumericOverflow { .. }
            | Error::NonFiniteGradient(_) => ErrorKind::Numeric,
            Error::Malformed { .. } | Error::Io { .. } => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidArgument,
    Io,
    Numeric,
}
