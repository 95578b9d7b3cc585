use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: row {row}: {message}")]
    DataRow { path: PathBuf, row: usize, message: String },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] leanreg_core::Error),
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

impl CliError {
    /// Process exit status: 2 for bad input, 3 for a singular Gram matrix,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. }
            | CliError::DataRow { .. }
            | CliError::Data { .. }
            | CliError::Argument(_)
            | CliError::Read { .. } => 2,
            CliError::Core(leanreg_core::Error::SingularGram { .. }) => 3,
            CliError::Core(leanreg_core::Error::InvalidSample(_) | leanreg_core::Error::DimensionMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
