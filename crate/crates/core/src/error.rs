use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at node {node}: {message}")]
    Shape { node: usize, message: String },

    #[error("non-finite value produced at node {node}")]
    NonFinite { node: usize },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("output node {node} is not a scalar (has {len} elements)")]
    NotScalar { node: usize, len: usize },

    #[error("leaf node {0} is not bound")]
    Unbound(usize),

    #[error("reference values missing or incomplete for rescale backward")]
    MissingReference,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing explanation(s): {0}")]
    MissingExplanations(String),

    #[error("insufficient qualifying samples: {0}")]
    InsufficientSamples(String),

    #[error("session refused: {0}")]
    Refused(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
