use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in layer `{layer}`: {detail}")]
    Shape { layer: String, detail: String },

    #[error("layer `{0}`: backward called before forward")]
    BackwardBeforeForward(String),

    #[error("non-finite gradient in parameter `{0}`; optimizer step aborted")]
    NonFiniteGradient(String),

    #[error("network is frozen; refusing to {0}")]
    Frozen(&'static str),

    #[error("network is not frozen; {0}")]
    NotFrozen(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("start region infeasible after {0} consecutive rejections")]
    InfeasibleRegion(usize),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,

    #[error("missing parameters in checkpoint: {}", .0.join(", "))]
    MissingParameters(Vec<String>),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
