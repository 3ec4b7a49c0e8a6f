use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid layer widths {0:?}")]
    Widths(Vec<usize>),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NeuralError::Dimension { what, expected, got })
    }
}
