use thiserror::Error;

/// Errors surfaced by the alignment engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("too few correspondence points: {0} (need at least 3)")]
    TooFewPoints(usize),

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    /// Singular-value gaps are below the threshold for a well-defined SVD
    /// derivative. Callers may jitter the points and retry, or skip the
    /// sample.
    #[error("svd gradient undefined: {0}")]
    GradientSingular(String),

    #[error("cad points have zero variance; scale is unobservable")]
    ZeroVariance,

    #[error("too few masked voxels: {0} (need at least 3)")]
    TooFewMasked(usize),

    #[error("ransac found no consensus (best inlier count {0})")]
    NoConsensus(usize),

    #[error("pose inconsistent with crop: voxel maps to ({0}, {1}, {2}), outside the tolerance band")]
    InconsistentPose(f64, f64, f64),

    #[error("not representable as a scale/rotation/translation pose: {0}")]
    UnrepresentablePose(String),

    #[error("empty shape")]
    EmptyShape,

    #[error("empty descriptor store")]
    EmptyStore,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scene placement failed: {0}")]
    PlacementFailed(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
