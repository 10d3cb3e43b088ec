use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no objects in scene")]
    NoObjects,
    #[error("scene invalid: {0}")]
    InvalidScene(String),
    #[error("malformed file header: {0}")]
    MalformedHeader(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("mask is empty")]
    EmptyMask,
    #[error("requested {requested} keypoints but mask has only {available} pixels")]
    MaskTooSmall { requested: usize, available: usize },
    #[error("duplicate pixels in manual keypoint list")]
    DuplicatePixels,
    #[error("manual strategy needs {expected} pixels, got {got}")]
    ManualPixelCount { expected: usize, got: usize },
    #[error("pixel ({0}, {1}) outside the mask")]
    PixelOutsideMask(usize, usize),
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("pixel ({0}, {1}) out of bounds for {2}x{3} map")]
    OutOfBounds(usize, usize, usize, usize),
    #[error("no valid depth for pixel ({0}, {1}) and no fallback available")]
    NoDepth(usize, usize),
    #[error("empty token set after dropout")]
    EmptyTokenSet,
    #[error("empty demonstration set")]
    EmptyDemoSet,
    #[error("action chunk not normalized: |{0}| exceeds 1 beyond tolerance")]
    UnnormalizedActions(f64),
    #[error("diffusion step {0} out of range 1..={1}")]
    StepOutOfRange(usize, usize),
    #[error("sampler steps {0} exceed training steps {1}")]
    TooManySamplerSteps(usize, usize),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("non-finite action")]
    NanAction,
    #[error("action dimension {0} does not match task dimension {1}")]
    ActionDimMismatch(usize, usize),
    #[error("episode too short: {0} frames, need at least {1}")]
    EpisodeTooShort(usize, usize),
    #[error("episode missing {0}")]
    EpisodeMissing(&'static str),
    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),
    #[error("checkpoint incompatible with config: {0}")]
    ConfigMismatch(String),
    #[error("missing reference file: {0}")]
    MissingReference(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
