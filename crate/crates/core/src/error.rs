use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown label token `{token}` in tier `{tier}`")]
    UnknownLabel { token: String, tier: String },

    #[error("shape mismatch for {name}: expected {expected}, got {actual}")]
    Shape {
        name: String,
        expected: String,
        actual: String,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fold construction failed: {0}")]
    Folds(String),

    #[error("class counts are required for the class-balanced focal loss")]
    MissingClassCounts,

    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: usize },

    #[error("all {0} search runs failed")]
    AllRunsFailed(usize),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("synthetic corpus spec is inconsistent: {0}")]
    SynthSpec(String),

    #[error("feature extraction failed for {} recording(s): {}", .0.len(), .0.join("; "))]
    Features(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
