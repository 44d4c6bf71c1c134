use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("symbol {0} out of range, expected 0..=15")]
    SymbolOutOfRange(u8),
    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("synchronization failed: detection metric {metric:.4} below threshold {threshold:.4}")]
    SyncFailed { metric: f64, threshold: f64 },
    #[error("all population parameter ranges are degenerate (min == max)")]
    DegenerateRanges,
    #[error("sampled devices {0} and {1} have identical parameter vectors")]
    DuplicateProfiles(usize, usize),
    #[error("empty selection")]
    EmptySelection,
    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),
    #[error("backward pass called without recorded forward intermediates")]
    MissingIntermediates,
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
