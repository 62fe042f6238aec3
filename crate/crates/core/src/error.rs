use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error at row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error("numerical divergence at step {step}: {message}")]
    Divergence { step: usize, message: String },

    #[error("training failed at epoch {epoch}, step {step}: {message}")]
    TrainingFailure {
        epoch: usize,
        step: usize,
        message: String,
    },

    #[error("degenerate normalization for {group}: max equals min ({value})")]
    DegenerateNormalization { group: String, value: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
