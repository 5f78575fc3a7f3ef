use std::path::PathBuf;

use crate::pooling::Axis;

/// Errors produced by the orbitpool library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("hash length mismatch: {left} bits vs {right} bits")]
    HashLengthMismatch { left: usize, right: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("image too small: {width}x{height}, minimum is {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("invalid orbit spec: {0}")]
    InvalidOrbitSpec(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("axis {0} already pooled")]
    AxisAlreadyPooled(Axis),

    #[error("axis {0} not generated (orbit group disabled)")]
    AxisNotGenerated(Axis),

    #[error("invalid pooling sequence: {0}")]
    InvalidSequence(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("empty descriptor set")]
    EmptyDescriptorSet,

    #[error("index and query types differ: {0}")]
    TypeMismatch(String),

    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing output of stage `{stage}`: {path}")]
    MissingStage { stage: &'static str, path: PathBuf },

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
