use thiserror::Error;

/// Errors raised by the library. Numerical aborts carry enough context to
/// reproduce the failing step.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid observable: {0}")]
    InvalidObservable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot build {requested} orthogonal states in dimension {dim}")]
    ImpossibleOrthogonality { requested: usize, dim: usize },
    #[error("data states are not orthogonal (overlap {overlap:.3e} between {a} and {b})")]
    NonOrthogonal { a: usize, b: usize, overlap: f64 },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("fit domain error: {0}")]
    FitDomain(String),
    #[error("singular ratio: lambda_{{bbb}} vanishes for index {0}")]
    SingularRatio(usize),
    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: String },
    #[error("numerical abort at step {step} (eta = {eta}): {reason}")]
    NumericalAbort { step: usize, eta: f64, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
