use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A log record failed validation. `line` is 1-based.
    #[error("{}:{line}: {message}", file.display())]
    Ingest {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("schema mismatch: model expects `{expected}`, got `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("unsupported model format version {found} (this build reads {expected})")]
    ModelVersion { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing label: {0}")]
    MissingLabel(String),
    #[error("session incomplete; unjudged trials: {}", .0.join(", "))]
    IncompleteSession(Vec<String>),
    #[error("not implemented: {0}")]
    NotImplemented(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for errors caused by bad input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
