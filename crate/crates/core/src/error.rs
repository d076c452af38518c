use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// The cold-start variants (`ColdStartUser`, `UnknownUser`, `Unpredictable`)
/// are routing signals rather than failures: callers catch them and fall back
/// to the new-user / new-item prediction paths.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty vocabulary: no feature words survived filtering")]
    EmptyVocabulary,

    #[error("score classes without labeled comments: {0:?}")]
    MissingScoreClasses(Vec<u8>),

    #[error("user {0} has no training ratings")]
    ColdStartUser(u32),

    #[error("user {0} is not a vertex of the fitted graph")]
    UnknownUser(u32),

    #[error("no prediction route for user {user}, item {item}")]
    Unpredictable { user: u32, item: u32 },

    #[error("model selection failed for every candidate: {0}")]
    SelectionFailed(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
