use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("edge index {index} out of range for a graph with {count} edges")]
    EdgeIndex { index: usize, count: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("unknown built-in graph `{0}`")]
    UnknownGraph(String),
    #[error("graph file line {line}: {msg}")]
    GraphParse { line: usize, msg: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular matrix at pivot {0}")]
    Singular(usize),
    #[error("no equilibrium found for the stage game")]
    NoEquilibrium,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
