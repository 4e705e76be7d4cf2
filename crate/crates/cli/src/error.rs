use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sigsel_core::Error),

    #[error("{0}: no such file")]
    NotFound(PathBuf),

    #[error("{path}: unsupported knowledgebase version {found:?} (this build reads version {expected:?})")]
    Version {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },

    #[error("{path}: corrupt knowledgebase: {message}")]
    Corrupt { path: PathBuf, message: String },

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

    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::NotFound(path)
        } else {
            CliError::Io { path, source }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
