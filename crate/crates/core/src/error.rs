use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {dim} (direction-number table holds {max})")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("insufficient data: need at least {need} observations, have {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("surrogate fit failed: {0}")]
    FitFailed(String),

    #[error("non-finite gradient in row {row}")]
    InvalidGradient { row: usize },

    #[error("invalid acquisition score at candidate {index}")]
    InvalidScore { index: usize },

    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("objective returned non-finite value {value} at evaluation {evaluation}")]
    NonFiniteObjective { evaluation: usize, value: f64 },

    #[error(transparent)]
    Bridge(#[from] crate::bridge::BridgeError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
