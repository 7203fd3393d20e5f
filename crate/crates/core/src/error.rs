use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("simulation diverged at step {step} (state {state})")]
    SimulationDiverged { step: usize, state: f64 },

    #[error("drift evaluated to a non-finite value at grid index {index} (x = {x})")]
    NonFiniteDrift { index: usize, x: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("basis index {index} out of range for a family of {size} functions")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("operation requires a differentiable periodic family, got {0}")]
    UnsupportedFamily(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("trace too short: {len} retained samples, need at least {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
