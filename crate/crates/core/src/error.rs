use thiserror::Error;

#[derive(Debug, Error)]
pub enum RcsError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },
    #[error("class {0} has no true samples")]
    AbsentClass(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RcsError>;

pub(crate) fn shape(msg: impl Into<String>) -> RcsError {
    RcsError::ShapeMismatch(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> RcsError {
    RcsError::InvalidArgument(msg.into())
}
