use thiserror::Error;

/// Errors surfaced by the filtering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite posterior score at particle {particle}")]
    NonFiniteScore { particle: usize },

    #[error("particle {particle} diverged at inner iteration {iteration}")]
    Diverged { particle: usize, iteration: usize },

    #[error("matrix is not invertible: {0}")]
    Singular(&'static str),

    #[error("map parse error (line {line}): {msg}")]
    MapParse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
