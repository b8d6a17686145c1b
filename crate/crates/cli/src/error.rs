use std::path::{Path, PathBuf};

use fdlp_core::ErrorKind;

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_VERIFY: u8 = 5;
pub const EXIT_BATCH: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] fdlp_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{failed} of {total} checks failed")]
    VerifyFailed { failed: usize, total: usize },

    #[error("{failed} of {total} inputs failed")]
    Batch { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Core(e) => match e.kind() {
                ErrorKind::InvalidArgument => EXIT_INVALID,
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Numeric => EXIT_NUMERIC,
            },
            CliError::Io { .. } => EXIT_IO,
            CliError::VerifyFailed { .. } => EXIT_VERIFY,
            CliError::Batch { .. } => EXIT_BATCH,
        }
    }
}
