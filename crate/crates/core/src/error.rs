use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: signal {signal} has duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: PathBuf,
        signal: String,
        timestamp: f64,
    },

    #[error("{0}: capture contains no signals")]
    EmptyCapture(PathBuf),

    #[error("capture {capture_id}: overlap window yields {points} grid point(s), need at least 2")]
    InsufficientOverlap { capture_id: String, points: usize },

    #[error("capture {0}: every signal is constant on the common grid")]
    DegenerateCapture(String),

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("non-finite dissimilarity at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("element {0:?} is not a leaf of the dendrogram")]
    UnknownElement(String),

    #[error("element sets differ: only in first {only_a:?}, only in second {only_b:?}")]
    ElementMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("personalized diffusion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("malformed dendrogram: {0}")]
    MalformedDendrogram(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal {0:?} is not binary-valued")]
    NotBinary(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a human-readable location (capture id, file, pair).
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for problems with the run configuration rather than with the data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidParameter(_) | Error::TooFew { .. } => true,
            Error::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
