//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("fully masked attention row {row}: mask construction bug")]
    DegenerateRow { row: usize },

    #[error("cross entropy received all-zero weights: no training signal")]
    NoSignal,

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },

    #[error("parameter `{name}` has no gradient: backward was not run")]
    MissingGrad { name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus: no sentences to ingest")]
    EmptyCorpus,

    #[error("text tokenizes to nothing")]
    EmptySentence,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("sequence length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("checkpoint corrupt at byte offset {offset}: {reason}")]
    CheckpointCorrupt { offset: u64, reason: String },

    #[error("checkpoint format version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),

    #[error("logistic regression needs at least two examples of each class")]
    SingleClass,

    #[error("empty candidate list in n-best entry {entry}")]
    EmptyCandidates { entry: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("no non-special tokens to pool")]
    NothingToPool,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
