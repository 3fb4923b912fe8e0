use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no usable records in input")]
    NoRecords,

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown vertex {0}")]
    UnknownVertex(u64),

    #[error("submap already frozen")]
    AlreadyFrozen,

    #[error("submap is not frozen")]
    NotFrozen,

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("no relation could be matched to the trajectory")]
    NoRelations,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoStream(#[from] std::io::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
