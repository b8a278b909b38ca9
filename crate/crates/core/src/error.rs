use std::path::PathBuf;

/// Errors produced anywhere in the registration / uncertainty pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid displacement set: {0}")]
    InvalidDisplacementSet(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("position {pos:?} is outside the image domain")]
    OutOfBounds { pos: Vec<f64> },
    #[error("voxel {voxel} has no in-bounds candidate displacement")]
    AllCandidatesOutOfBounds { voxel: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(
        "conjugate gradients did not converge for label {label}: residual {residual:e} after {iterations} iterations"
    )]
    CgDidNotConverge {
        label: usize,
        residual: f64,
        iterations: usize,
    },
    #[error("solution for label {label} at voxel {voxel} is {value:e}, below the clamp threshold")]
    NegativeProbability { label: usize, voxel: usize, value: f64 },
    #[error("instance has {voxels} voxels; the dense oracle accepts at most {limit}")]
    InstanceTooLarge { voxels: usize, limit: usize },
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("deformation amplitude {amplitude} exceeds displacement radius {radius}")]
    AmplitudeExceedsRadius { amplitude: f64, radius: u32 },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: unsupported maxval {maxval}")]
    UnsupportedMaxval { path: PathBuf, maxval: u32 },
    #[error("{path}: truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: bad magic, not a PIRD file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported PIRD version {version}")]
    VersionUnsupported { path: PathBuf, version: u32 },
    #[error("{path}: file length {actual} does not match header ({expected} bytes)")]
    ChecksumOfLengthFailed {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: voxel {voxel} probabilities sum to {sum}")]
    DistributionInvalid { path: PathBuf, voxel: usize, sum: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
