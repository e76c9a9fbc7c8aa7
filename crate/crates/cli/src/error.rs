use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] pvec_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// 1 usage, 2 I/O, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use pvec_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(e) => match e {
                E::Io { .. } | E::Parse { .. } => 2,
                E::NonFinite(_) => 3,
                _ => 1,
            },
        }
    }
}
