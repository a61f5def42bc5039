use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("trace is empty or not rectangular")]
    Malformed,
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("trace has {n} rows, at least {min} required")]
    TooShort { n: usize, min: usize },
    #[error("trace has {p} columns, at most {max} supported")]
    TooWide { p: usize, max: usize },
    #[error("trace has {n} rows, at most {max} supported")]
    TraceTooLong { n: usize, max: usize },
    #[error("column {column} is constant; its CDF is not invertible")]
    ConstantColumn { column: usize },
    #[error("value {value} lies outside the open unit interval")]
    OutOfRange { value: f64 },
    #[error("Cholesky factorization failed after positive-definite correction")]
    CholeskyFailure,
    #[error("residual column {column} has zero variance")]
    DegenerateResiduals { column: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("nearest-correlation projection did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("trace of length {n} is too short for window length {window} (need n >= 4L)")]
    TraceTooShortForL { n: usize, window: usize },
    #[error("distance query against an empty set")]
    EmptySet,
    #[error("sample sizes must both be positive (m={m}, n={n})")]
    DegenerateSizes { m: usize, n: usize },
    #[error("k={k} exceeds the {distinct} distinct training points")]
    KTooLarge { k: usize, distinct: usize },
    #[error("every bin was skipped by the retention rule")]
    NoBinsRetained,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Coarse classification used to choose process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::CholeskyFailure | Error::NoConvergence(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}
