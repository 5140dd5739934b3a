use std::io;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index error: {0}")]
    Index(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("batching error: {0}")]
    Batching(String),
    #[error("mask error: {0}")]
    Mask(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("parse error at byte {offset}{}: {msg}", record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    Parse {
        record: Option<usize>,
        offset: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
