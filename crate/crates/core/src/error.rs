use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (bad timestamp, unknown trial, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Study definition cannot be compiled (empty gold pool, too few trials, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with arguments outside its domain.
    #[error("usage error: {0}")]
    Usage(String),

    /// Correlation or fit is undefined for the given data (zero variance, degenerate fit).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
