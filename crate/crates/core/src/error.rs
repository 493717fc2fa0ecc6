use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("location index {index} out of range for {n} locations")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("episode: {0}")]
    Episode(String),

    #[error(
        "quadrature did not converge ({detail}); increase `nodes` or `tolerance` in the quadrature spec"
    )]
    Quadrature { detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged at saccade {saccade}, epoch {epoch}: {detail}")]
    Diverged {
        saccade: usize,
        epoch: usize,
        detail: String,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
