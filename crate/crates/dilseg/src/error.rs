use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}: {1}")]
    Path(String, #[source] io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] dilseg_core::Error),
}

impl IoError {
    /// Prefixes format errors with the offending path.
    pub fn context(self, path: &Path) -> IoError {
        match self {
            IoError::Format(msg) => IoError::Format(format!("{}: {}", path.display(), msg)),
            IoError::Io(e) => IoError::Path(path.display().to_string(), e),
            other => other,
        }
    }
}

pub type IoResult<T> = std::result::Result<T, IoError>;
