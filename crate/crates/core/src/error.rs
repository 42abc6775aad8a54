use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },

    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch { context: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("loss must be a single element, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("requested {requested} distinct sequences but only {available} exist")]
    InsufficientSpace { requested: usize, available: usize },

    #[error("role scheme or architecture requires a parse tree")]
    MissingTree,

    #[error("role token `{0}` is not in the vocabulary")]
    UnknownRole(String),

    #[error("invalid output length {0}")]
    BadLength(usize),

    #[error("invalid digit sequence: {0}")]
    InvalidSequence(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("filler dim {filler} x role dim {role} must equal {target} without a final linear map")]
    IncompatibleDims { filler: usize, role: usize, target: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {record}: vector has {found} components, expected {expected}")]
    DimMismatch { record: usize, expected: usize, found: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
