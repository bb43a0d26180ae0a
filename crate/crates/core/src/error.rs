use alloc::string::String;

/// Every failure mode of the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("argument outside the admissible domain: {0}")]
    Domain(String),
    #[error("quadrature did not converge: {0}")]
    NonConvergent(String),
    #[error("degenerate increment variance for component {0}")]
    DegenerateVariance(usize),
    #[error("series did not reach its tail bound: {0}")]
    SeriesDiverged(String),
    #[error("need at least {needed} lags, got {got}")]
    InsufficientLags { needed: usize, got: usize },
    #[error("index {index} outside 1..={max}")]
    OutOfRange { index: usize, max: usize },
    #[error("problem size {size} exceeds cap {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("matrix not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("volatility information missing")]
    MissingVolatility,
    #[error("degenerate denominator in component {0}")]
    DegenerateDenominator(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("limit not converged: relative delta {delta:e} exceeds {tolerance:e}")]
    NotConverged { delta: f64, tolerance: f64 },
    #[error("degenerate limit quantity: {0}")]
    DegenerateLimit(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
