use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input. `location` names the line (text formats) or byte offset (binary).
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid value in row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("dimension mismatch in row {row}: expected {expected} columns, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("missing labels: {0}")]
    MissingLabels(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for I/O and parse failures, false for contract or configuration violations.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
