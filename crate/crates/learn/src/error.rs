use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Core(#[from] swarmgame_core::Error),
    #[error(transparent)]
    Neural(#[from] swarmgame_neural::NeuralError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}; last good checkpoint: {}", checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    Diverged {
        iteration: usize,
        checkpoint: Option<PathBuf>,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LearnError>;
