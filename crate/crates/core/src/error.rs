//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by kernel construction, transform application, the
/// feature pipelines, training, and the quantum simulator.
#[derive(Debug, Error)]
pub enum GtError {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("transform list must contain at least two entries")]
    EmptyTransformList,

    #[error("cache does not match this forward call: {0}")]
    StaleCache(String),

    #[error("image has zero pixels")]
    EmptyImage,

    #[error("plane dimensions {height}x{width} are not divisible by {block}")]
    NotDivisible {
        height: usize,
        width: usize,
        block: usize,
    },

    #[error("unsupported size {0}: only 8x8 blocks are defined")]
    UnsupportedSize(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("token id {id} out of range for vocab size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("history is empty")]
    EmptyHistory,

    #[error("cannot amplitude-encode the zero vector")]
    ZeroVector,

    #[error("invalid unitary spec: {0}")]
    InvalidSpec(String),

    #[error("unitaries act on different qubit counts")]
    MixedDimensions,

    #[error("{count} unitaries exceed the {ancillas}-ancilla capacity")]
    TooManyUnitaries { count: usize, ancillas: usize },

    #[error("postselection amplitude is numerically zero (success probability {0:.3e})")]
    PostselectionImpossible(f64),

    #[error("unknown experiment id {0:?}")]
    UnknownId(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GtError>;
