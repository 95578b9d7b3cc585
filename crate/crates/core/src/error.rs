use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("singular Gram matrix: smallest Cholesky pivot {min_pivot:e} <= tolerance {tol:e}")]
    SingularGram { min_pivot: f64, tol: f64 },

    #[error("leave-one-out fit for observation {0} is degenerate")]
    DegenerateLeaveOneOut(usize),

    #[error("contrast vector has zero norm")]
    ZeroContrast,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("batch too small: {batches} batches of n = {n} rows cannot support d = {d} columns")]
    BatchTooSmall { batches: usize, n: usize, d: usize },

    #[error("bootstrap degenerate: {0}")]
    BootstrapDegenerate(String),

    #[error("data-generating process does not expose its population covariance and projection parameter")]
    UnknownPopulation,

    #[error("empty input")]
    EmptyInput,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
}
