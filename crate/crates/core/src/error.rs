use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = WalkError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The exact (enumerated) backend cannot handle this many edges.
    #[error(
        "graph has {edges} edges, above the exact enumeration limit of {limit}; \
         use the Monte Carlo backend (`montecarlo`) instead"
    )]
    Capacity { edges: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl WalkError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        WalkError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WalkError::Io {
            path: path.into(),
            source,
        }
    }
}
