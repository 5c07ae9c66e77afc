use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the ensemble library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid voting rule: {0}")]
    InvalidRule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("tally holds {found} votes but the rule expects {expected}")]
    TallySizeMismatch { expected: usize, found: usize },

    #[error("unknown normalizer `{0}` (expected `integer` or `verbatim-trim`)")]
    UnknownNormalizer(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate record for question `{question_id}` replicate {replicate}")]
    DuplicateRecord { question_id: String, replicate: u64 },

    #[error("agent command is not executable: {0}")]
    NotExecutable(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
