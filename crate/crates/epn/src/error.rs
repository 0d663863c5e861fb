use std::io;
use std::path::PathBuf;

use epn_core::{CiError, EpnError, QueryError, StreamError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("io: {0}")]
    Stream(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("{0}")]
    Window(#[from] StreamError),
    #[error("{0}")]
    Epn(#[from] EpnError),
    #[error("{0}")]
    Ci(#[from] CiError),
    #[error("{0}")]
    Query(#[from] QueryError),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
