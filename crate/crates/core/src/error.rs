use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = McodeError> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum McodeError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("output dimension {dim}: {source}")]
    Dimension {
        dim: usize,
        #[source]
        source: Box<McodeError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl McodeError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            McodeError::Config(_) => ErrorKind::Config,
            McodeError::Numerical(_) => ErrorKind::Numerical,
            McodeError::Dimension { source, .. } => source.kind(),
            McodeError::Parse { .. }
            | McodeError::Domain(_)
            | McodeError::Io { .. }
            | McodeError::Format { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        McodeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_dimension(self, dim: usize) -> Self {
        McodeError::Dimension {
            dim,
            source: Box::new(self),
        }
    }
}
