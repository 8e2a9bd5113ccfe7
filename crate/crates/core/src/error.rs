use thiserror::Error;

/// Errors raised across the forecasting library.
#[derive(Debug, Error)]
pub enum FilmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {index}: {detail}")]
    NonFinite { index: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("training failed at batch {batch}: {detail}")]
    Training { batch: usize, detail: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FilmError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(FilmError::InvalidArgument(msg.into()))
}
