use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value at image {image}, point {point}")]
    NonFinite { image: usize, point: usize },
    #[error("point behind camera (Z = {0})")]
    BehindCamera(f64),
    #[error("duplicate reference points {0} and {1}")]
    DuplicatePoints(usize, usize),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("incompatible method and data: {0}")]
    Incompatible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("generation failure: {0}")]
    Generation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
