//! Error type shared by every stage of the engine.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {message} (ids: {})", ids.join(", "))]
    Validation { message: String, ids: Vec<String> },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("requested {requested} components but data only supports rank {achievable}")]
    Rank { requested: usize, achievable: usize },

    #[error("cluster allocation error: {0}")]
    Alloc(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>, ids: Vec<String>) -> Self {
        Error::Validation {
            message: message.into(),
            ids,
        }
    }

    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::Dim { expected, got }
    }

    /// Wraps the error with the id of the record that caused it.
    pub fn for_record(self, id: &str) -> Self {
        Error::Record {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    /// Broad class of the failure, used by the CLI to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dim { .. }
            | Error::Format(_)
            | Error::Validation { .. }
            | Error::Param(_)
            | Error::Rank { .. }
            | Error::Alloc(_) => ErrorKind::Validation,
            Error::DegenerateInput(_) | Error::Numeric(_) => ErrorKind::Numeric,
            Error::Io(_) => ErrorKind::Io,
            Error::Record { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}
