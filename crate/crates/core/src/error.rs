use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}: corpus contains no samples")]
    EmptyCorpus(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol {protocol}: user {user} has {available} genuine samples, {required} needed for training")]
    InsufficientSamples {
        protocol: String,
        user: String,
        available: usize,
        required: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate graph: vertex {vertex} has zero degree (increase the neighbour count p)")]
    DegenerateGraph { vertex: usize },

    #[error("empty cluster: an interval reference needs at least one sample")]
    EmptyCluster,

    #[error("enrollment of user {user}: {message}")]
    Enrollment { user: String, message: String },

    #[error("no model enrolled for user {0}")]
    UnknownUser(String),

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
