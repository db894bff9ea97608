use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("cannot parse {value:?} as a number at row {row}, column {column}")]
    ParseCell { row: usize, column: usize, value: String },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid label {label} for {context}")]
    InvalidLabel { label: f64, context: &'static str },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged in epoch {epoch}: non-finite gradient")]
    Divergence { epoch: usize },

    #[error("learner does not support {0}")]
    Unsupported(&'static str),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed trace file: {0}")]
    TraceFormat(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
