use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "insufficient samples for concept {concept}: need {need_pos} positives and {need_neg} negatives, \
         have {have_pos} positives and {have_neg} negatives (short by {short_pos} positives, {short_neg} negatives)"
    )]
    InsufficientSamples {
        concept: String,
        need_pos: usize,
        need_neg: usize,
        have_pos: usize,
        have_neg: usize,
        short_pos: usize,
        short_neg: usize,
    },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("degenerate result: {0}")]
    Degenerate(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("refusing to overwrite existing artifact with different content: {0}")]
    ArtifactConflict(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's inputs rather than by the program.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::InsufficientSamples { .. }
                | Error::Config(_)
                | Error::MissingInput(_)
                | Error::ArtifactConflict(_)
        )
    }
}
