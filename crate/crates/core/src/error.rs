use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FtsError {
    #[error("grid must have at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("curves live on different grids ({0} vs {1} points)")]
    GridMismatch(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("lag {lag} out of range for series of length {n}")]
    LagOutOfRange { lag: usize, n: usize },

    #[error("missing lag {0} in autocovariance set")]
    MissingLag(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not enough observations: {0}")]
    InsufficientData(String),

    #[error("columns are not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("series {0} has zero variance")]
    ZeroVariance(usize),

    #[error("oracle method requires the true data-generating structure")]
    MissingTruth,
}

pub type Result<T> = std::result::Result<T, FtsError>;
