use thiserror::Error;

use crate::state::SpaceId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state belongs to space {got:?}, model expects {expected:?}")]
    SpaceMismatch { expected: SpaceId, got: SpaceId },

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trajectory tail is unbounded: {0}")]
    UnboundedTail(String),

    #[error("path deformation collapsed after {iterations} iterations: every interior node blew up")]
    DeformationCollapse { iterations: usize },

    #[error("condition rejected: {0}")]
    Rejected(String),

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
