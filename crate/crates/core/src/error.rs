use thiserror::Error;

/// Errors raised by the forecasting models and their I/O.
#[derive(Debug, Error)]
pub enum DybmError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("division by zero price at index {index}")]
    ZeroPrice { index: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite value encountered: {0}")]
    Diverged(String),
    #[error("nonstationary parameters: {0}")]
    Nonstationary(String),
    #[error("closed-form forecast unavailable: {0}; use the recursive forecaster")]
    NoClosedForm(String),
}

pub type Result<T> = std::result::Result<T, DybmError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DybmError::InvalidParameter(msg.into()))
}
