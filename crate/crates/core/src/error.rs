use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no word reaches min_count {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("sentence has {len} in-lexicon tokens, at least 2 are required")]
    TooShort { len: usize },

    #[error("no word outside the exclusion set has nonzero noise probability")]
    ExhaustedVocabulary,

    #[error("invalid dimension: vocab_size={vocab_size}, dim={dim}")]
    InvalidDimension { vocab_size: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("user set mismatch: {0}")]
    UserSetMismatch(String),

    #[error("cannot score an empty result set")]
    EmptyResults,

    #[error("query vector has zero norm")]
    DegenerateQuery,

    #[error("anchor word not in lexicon: {0}")]
    UnknownAnchor(String),

    #[error("word not in lexicon: {0}")]
    UnknownWord(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
