use std::path::PathBuf;

use thiserror::Error;

use crate::stats::StatsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed ICD-9 code {0:?}")]
    InvalidCode(String),

    #[error("unknown concept {0:?}")]
    UnknownConcept(String),

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error("unknown session {0:?}")]
    UnknownSession(String),

    #[error("task {task_id:?} does not belong to session {session_id:?}")]
    UnknownTask { session_id: String, task_id: String },

    #[error("session {0:?} is finalized and can no longer be modified")]
    SessionFinalized(String),

    #[error("session {0:?} must be finalized first")]
    SessionOpen(String),

    #[error("sessions {0:?} and {1:?} share no tasks")]
    DisjointSessions(String, String),

    #[error("invalid span {start}..{end} for document {doc_id:?}")]
    InvalidSpan {
        doc_id: String,
        start: usize,
        end: usize,
    },

    #[error("no validation result for sampled code {0}")]
    MissingValidation(String),

    #[error("missing {artifact}; run `{stage}` first")]
    MissingArtifact { artifact: PathBuf, stage: String },

    #[error("model was trained against dictionary {expected}, got {actual}")]
    DictionaryMismatch { expected: String, actual: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
