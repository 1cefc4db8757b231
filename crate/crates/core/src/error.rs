//! Error types shared across the crate.

use thiserror::Error;

/// Failures raised by tensor operations and the differentiation engine.
#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("softmax row {row} has no valid position")]
    AllMasked { row: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Failures raised while loading, validating, or transforming clips.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed clip file {path}: {details}")]
    Malformed { path: String, details: String },
    #[error("clip has {got} frames, expected {expected}")]
    WrongFrameCount { got: usize, expected: usize },
    #[error("person {person} has {got} keypoints, expected {expected}")]
    WrongKeypointCount { person: usize, got: usize, expected: usize },
    #[error("unknown label name {name:?}")]
    UnknownLabel { name: String },
    #[error("clip holds {got} {kind}, capacity is {capacity}")]
    CapacityExceeded { kind: &'static str, got: usize, capacity: usize },
    #[error("smoothing window must be odd and at most the frame count, got {window}")]
    BadWindow { window: usize },
    #[error("invalid clip: {0}")]
    Invalid(String),
}

/// Failures raised by training, evaluation, and checkpointing.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("numeric failure: {0}")]
    Numeric(#[from] NumericError),
    #[error("scene failure: {0}")]
    Scene(#[from] SceneError),
    #[error("loss became non-finite at epoch {epoch}, step {step} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, step: usize, last_loss: f64 },
    #[error("empty {0} set")]
    EmptyDataset(&'static str),
    #[error("label id {id} out of range for {classes} classes")]
    BadLabel { id: usize, classes: usize },
    #[error("checkpoint incompatible: {0}")]
    CheckpointMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("unknown variant or suite name {0:?}")]
    UnknownVariant(String),
}
