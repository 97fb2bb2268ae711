//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: String, right: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("entity id {0} out of range (num_entities = {1})")]
    EntityOutOfRange(usize, usize),
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("non-finite gradient in parameter block '{0}'")]
    NonFiniteGradient(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
