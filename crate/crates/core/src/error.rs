use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: unknown query id `{id}`")]
    UnknownQueryId {
        path: PathBuf,
        line: u64,
        id: String,
    },

    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId {
        path: PathBuf,
        line: u64,
        id: String,
    },

    #[error("{path}: empty query set")]
    EmptyQuerySet { path: PathBuf },

    #[error("{0}")]
    InvalidData(String),

    #[error("{field} must be {constraint}")]
    InvalidParameter {
        field: &'static str,
        constraint: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("objective is unbounded below: {0}")]
    Unbounded(String),

    #[error("{routine} did not converge after {iterations} iterations")]
    NonConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("cannot write an empty {0}")]
    Empty(&'static str),

    #[error("iteration {iteration}, {step}: {source}")]
    Solver {
        iteration: usize,
        step: &'static str,
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

    pub(crate) fn param(field: &'static str, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            constraint: constraint.into(),
        }
    }
}
