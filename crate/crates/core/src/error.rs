use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible array or window shapes.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Caller-supplied data is out of range or malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Hyperparameter or spec-file validation failure.
    #[error("configuration error: {0}")]
    Config(String),

    /// Structured file could not be parsed; `path` names the offending field or file.
    #[error("parse error at {path}: {msg}")]
    Parse { path: String, msg: String },

    /// Training produced a non-finite loss or gradient.
    #[error("training error: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }

    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
