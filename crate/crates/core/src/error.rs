use thiserror::Error;

/// Errors raised by the bridge solver and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least {min} nodes, got {got}")]
    GridTooSmall { got: usize, min: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {0} is outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("density is not strictly positive (node {node}, value {value:e})")]
    NotStrictlyPositive { node: usize, value: f64 },

    #[error("density mass {mass} deviates from 1 by more than {tol:e}")]
    MassDrift { mass: f64, tol: f64 },

    #[error("matrix is not skew-symmetric (symmetric part {0:e})")]
    NotSkew(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
