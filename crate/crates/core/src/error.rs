use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApaError {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A sample set with zero spread was passed to a fitting routine.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    /// Between-class covariance vanished, so NC1 is undefined.
    #[error("undefined collapse measure: between-class covariance is zero")]
    UndefinedCollapse,
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An operation was invoked out of order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),
    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// A dataset or model specification is invalid.
    #[error("invalid specification: {0}")]
    Spec(String),
    /// Training diverged.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, ApaError>;
