use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record or row could not be parsed. `line` is 1-based.
    #[error("{origin}, line {line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("duplicate patent id `{0}`")]
    DuplicateId(String),

    #[error("invalid record `{id}`: {message}")]
    InvalidRecord { id: String, message: String },

    /// Referenced ids that do not resolve (strict referential checking).
    #[error("{context}: {} unknown id(s): {}", .ids.len(), .ids.join(", "))]
    UnknownIds { context: String, ids: Vec<String> },

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config: {0}")]
    Config(String),

    /// A statistic is mathematically undefined for the given data
    /// (zero variance, zero marginal, too few entries).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error was caused by the caller's inputs rather than a
    /// fault in the tool itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::Io { .. } | Error::Json(_) | Error::Csv(_) => true,
            Error::Parse { .. }
            | Error::DuplicateId(_)
            | Error::InvalidRecord { .. }
            | Error::UnknownIds { .. }
            | Error::Taxonomy(_)
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Undefined(_)
            | Error::InsufficientData(_) => true,
            Error::Internal(_) => false,
        }
    }
}
