use alloc::string::String;

/// Errors raised by the ranking core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    /// All labels in the list are equal, so no preference pair exists.
    #[error("no valid preference pair: all labels equal")]
    NoPair,
    /// Only one relevance class is present.
    #[error("score separation undefined: only one class present")]
    SingleClass,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
