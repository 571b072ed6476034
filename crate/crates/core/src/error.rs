use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("batch variance needs at least 2 samples, got {0}")]
    UndefinedVariance(usize),

    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("backward called before forward")]
    NoForwardCache,

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("corrupt CIFAR-10 record {index} in {path}: label byte {label}")]
    CorruptRecord {
        path: PathBuf,
        index: usize,
        label: u8,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(op: &'static str, expected: &[usize], got: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
