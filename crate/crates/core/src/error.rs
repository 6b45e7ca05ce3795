use std::path::Path;

use thiserror::Error;

use crate::adapter::AdapterError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what}: parse error at line {line}, column {column}: {msg}")]
    Parse {
        what: String,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("model adapter: {0}")]
    Adapter(#[from] AdapterError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Codec(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
