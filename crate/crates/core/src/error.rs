use std::io;

use thiserror::Error;

use crate::catalog::ContentId;
use crate::netmodel::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid catalog spec: {0}")]
    InvalidCatalogSpec(String),

    #[error("unknown modality class `{0}`")]
    UnknownModalityClass(String),

    #[error("content size must be positive, got {0}")]
    InvalidContentSize(u64),

    #[error("invalid workload profile: {0}")]
    InvalidProfile(String),

    #[error("slot {slot} is outside the horizon of {horizon} slots")]
    SlotOutOfHorizon { slot: u32, horizon: u32 },

    #[error("cannot draw requests from an empty catalog")]
    EmptyCatalog,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("network shapes are not compatible")]
    ShapeMismatch,

    #[error("empty batch")]
    EmptyBatch,

    #[error("cannot sample {requested} transitions from a buffer holding {available}")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("training diverged: non-finite loss at train step {step}")]
    Divergence { step: u64 },

    #[error("ratio is undefined without any recorded requests")]
    ZeroDenominator,

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown content {0}")]
    UnknownContent(ContentId),

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("cache capacity violated at node {node}: {used} bytes used of {capacity}")]
    CapacityViolation { node: NodeId, used: u64, capacity: u64 },

    #[error("metrics invariant violated: {0}")]
    MetricsViolation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed CSV input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
