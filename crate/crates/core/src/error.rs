use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("shape does not fit inside a {image_size}px image: {detail}")]
    ShapeOutOfBounds { image_size: usize, detail: String },
    #[error("could not place object after {0} attempts")]
    PlacementFailed(usize),
    #[error("gaussian sampler rejected {rejected} of {attempts} draws; spec is degenerate")]
    DegenerateGaussian { rejected: usize, attempts: usize },
    #[error("requested {requested} noise pixels but only {available} background pixels exist")]
    NotEnoughBackground { requested: usize, available: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("stimulus has {clusters} clusters but the model has {channels} output channels")]
    TooManyClusters { clusters: usize, channels: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },
    #[error(transparent)]
    Autodiff(#[from] oclu_autodiff::AutodiffError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
