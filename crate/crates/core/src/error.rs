use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("no records accepted from {0}")]
    NoRecords(PathBuf),

    #[error("unknown target class `{0}`")]
    UnknownClass(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown term index {0}")]
    UnknownTerm(usize),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("label `{label}` has {count} documents, need at least {needed}")]
    LabelTooRare {
        label: String,
        count: usize,
        needed: usize,
    },

    #[error("need at least two distinct labels, found {0}")]
    SingleLabel(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no indicative features for label `{0}` (all chi-square scores are zero)")]
    UndefinedNfis(String),

    #[error("vocabulary is empty after pruning")]
    EmptyVocabulary,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
