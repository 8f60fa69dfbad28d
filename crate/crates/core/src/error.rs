//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Invalid configuration value; carries a field path and a reason.
    Config { field: String, reason: String },
    /// Corpus generation or query-log construction failed.
    Corpus(String),
    /// Tensor shape mismatch; names the offending tensor.
    Shape { tensor: String, expected: String, actual: String },
    /// Training produced a non-finite loss or otherwise diverged.
    Train(String),
    /// Evaluation-side failure (index construction, metric computation).
    Eval(String),
    /// Artifact persistence/loading failure (version, hash, truncation).
    Artifact(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config { field, reason } => write!(f, "config error at `{field}`: {reason}"),
            Error::Corpus(msg) => write!(f, "corpus error: {msg}"),
            Error::Shape { tensor, expected, actual } => {
                write!(f, "shape error for tensor `{tensor}`: expected {expected}, got {actual}")
            }
            Error::Train(msg) => write!(f, "training error: {msg}"),
            Error::Eval(msg) => write!(f, "evaluation error: {msg}"),
            Error::Artifact(msg) => write!(f, "artifact error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
