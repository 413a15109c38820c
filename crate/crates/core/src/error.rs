use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid prior parameters: {0}")]
    InvalidPrior(String),

    #[error("noise covariance is not symmetric positive definite")]
    InvalidCovariance,

    #[error("scaling violation: {0}")]
    ScalingViolation(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("expected a binary field (values in {{-1, 0, +1}})")]
    NotBinary,

    #[error("grid mismatch: expected N={expected}, got N={got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("refused: {0}")]
    Refused(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
