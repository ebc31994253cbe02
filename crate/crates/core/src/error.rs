use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in layer {layer} ({kind}): expected {expected:?}, got {got:?}")]
    LayerShape {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed container: {0}")]
    Format(String),

    #[error("partition impossible: {0}")]
    Partition(String),

    #[error("training diverged at round {round}: loss {loss}")]
    Diverged { round: usize, loss: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LayerShape { .. } | Error::Shape(_) => "shape",
            Error::Model(_) => "model",
            Error::InvalidArgument(_) => "argument",
            Error::Truncated { .. } => "truncated",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Partition(_) => "partition",
            Error::Diverged { .. } => "diverged",
            Error::Config { .. } => "config",
        }
    }
}
