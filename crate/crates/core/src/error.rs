use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what}: line {line}: {message}")]
    Parse {
        what: String,
        line: usize,
        message: String,
    },

    #[error("samples reference missing articles: {}", .sample_ids.join(", "))]
    Integrity { sample_ids: Vec<String> },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("{artifact} was built for corpus {expected}, but the corpus hashes to {found}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown article id {0:?}")]
    UnknownArticle(String),

    #[error("linear system is singular")]
    Singular,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(what: impl Into<String>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            line,
            message: message.to_string(),
        }
    }
}
