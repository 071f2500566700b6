use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Too few points for manifold reduction; callers fall back to raw vectors.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A provider call failed. `retryable` marks transport-level failures that
    /// were (or may be) retried before surfacing.
    #[error("provider error: {message}")]
    Provider { message: String, retryable: bool },

    /// A build aborted part-way; `completed_layers` and `completed_nodes`
    /// describe what had been produced before the failure.
    #[error("build aborted in layer {layer} after {completed_nodes} nodes ({completed_layers} complete layers): {source}")]
    BuildAborted {
        layer: usize,
        completed_layers: usize,
        completed_nodes: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checksum mismatch: expected {expected}, computed {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u64),

    #[error("corrupt index: {0}")]
    CorruptIndex(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn provider(message: impl Into<String>, retryable: bool) -> Self {
        Error::Provider {
            message: message.into(),
            retryable,
        }
    }

    /// True for provider failures, including ones wrapped by an aborted build.
    pub fn is_provider_failure(&self) -> bool {
        match self {
            Error::Provider { .. } => true,
            Error::BuildAborted { source, .. } => source.is_provider_failure(),
            _ => false,
        }
    }
}
