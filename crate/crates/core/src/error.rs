use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("project `{0}` already exists")]
    AlreadyExists(String),
    #[error("unknown project `{0}`")]
    UnknownProject(String),
    #[error("invalid label schema: {0}")]
    InvalidSchema(String),
    #[error("invalid dimension: {0}")]
    InvalidDim(String),
    #[error("row {row}: expected dimension {expected}, got {actual}")]
    DimMismatch {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("unknown record `{0}`")]
    UnknownRecord(String),
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unknown reducer `{0}`")]
    UnknownReducer(String),
    #[error("reducer `{0}` is already registered")]
    DuplicateName(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("row count mismatch: expected {expected}, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("query text is empty")]
    EmptyQuery,
    #[error("query text hashes to the zero vector")]
    DegenerateQuery,
    #[error("embedding provider timed out")]
    ProviderTimeout,
    #[error("embedding provider returned status {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("embedding provider unreachable: {0}")]
    ProviderUnavailable(String),
    #[error("unknown layout `{0}`")]
    UnknownLayout(String),
    #[error("average precision undefined: no relevant items")]
    Undefined,
    #[error("invalid k: {0}")]
    InvalidK(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("foreign pool too small: need {needed}, have {available}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("missing ground-truth labels: {0}")]
    MissingLabels(String),
    #[error("malformed {what}: {msg}")]
    Malformed { what: &'static str, msg: String },
    #[error("corrupt store file {path}: {msg}")]
    CorruptStore { path: PathBuf, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn malformed(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
