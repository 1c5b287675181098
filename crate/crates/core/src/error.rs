use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("character {0:?} is not in the vocabulary")]
    UnknownChar(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("duplicate task `{0}`")]
    DuplicateTask(String),

    #[error("unsupported checkpoint version or bad magic header: {0}")]
    CheckpointVersion(String),

    #[error("truncated checkpoint: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("malformed input at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}
