use thiserror::Error;

/// Errors raised by the library. Condition failures are data, not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid model parameters: {0}")]
    Model(String),
    #[error("numeric error at step {step}: {msg}")]
    Numeric { step: usize, msg: String },
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("series diverges: {0}")]
    Divergence(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
