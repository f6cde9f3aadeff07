use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config line {line}: key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{what} stopped after {iterations} iterations (residual {residual:e}); best iterate retained")]
    Stalled {
        what: &'static str,
        iterations: usize,
        residual: f64,
        best: Box<crate::grid::Field2D>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("checkpoint {path:?} rejected: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<LabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        LabError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
