use std::path::PathBuf;

use hdfts::FtsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: incomplete lattice: {message}")]
    RaggedLattice { path: PathBuf, message: String },

    #[error("{path}: abscissae are not equally spaced: {message}")]
    NonUniformGrid { path: PathBuf, message: String },

    #[error("{path}: non-finite value at line {line}")]
    NonFiniteValue { path: PathBuf, line: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] FtsError),
}

impl CliError {
    /// Process exit code; each input-validation failure has its own.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Csv { .. } => 3,
            CliError::RaggedLattice { .. } => 4,
            CliError::NonUniformGrid { .. } => 5,
            CliError::NonFiniteValue { .. } => 6,
            CliError::Config(_) => 7,
            CliError::Numerical(_) => 8,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
