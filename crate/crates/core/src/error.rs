use alloc::string::String;

/// Errors raised by the pipeline algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("non-finite pixel at ({x}, {y})")]
    NonFinitePixel { x: usize, y: usize },
    #[error("frame {width}x{height} is smaller than one {crop_w}x{crop_h} crop")]
    FrameTooSmall {
        width: usize,
        height: usize,
        crop_w: usize,
        crop_h: usize,
    },
    #[error("invalid crop grid: {0}")]
    InvalidGrid(String),
    #[error("point ({x}, {y}) lies outside image {image_id} ({width}x{height})")]
    PointOutOfBounds {
        image_id: String,
        x: u32,
        y: u32,
        width: usize,
        height: usize,
    },
    #[error("duplicate annotation point ({x}, {y}) in image {image_id}")]
    DuplicatePoint { image_id: String, x: u32, y: u32 },

    #[error("patch {index} rectangle lies outside the card image")]
    PatchOutOfBounds { index: usize },
    #[error("patch {index} has {count} pixels after trimming, need at least {min}")]
    PatchTooSmall {
        index: usize,
        count: usize,
        min: usize,
    },
    #[error("grey patches are not ordered lightest to darkest (entry {index})")]
    PatchOrdering { index: usize },
    #[error("invalid grey reference: {0}")]
    InvalidReference(String),
    #[error("singular fit in channel {channel}: measured grey values are degenerate")]
    SingularFit { channel: usize },
    #[error("inverted response in channel {channel} (gain {gain})")]
    InvertedResponse { channel: usize, gain: f64 },
    #[error("image is already calibrated")]
    AlreadyCalibrated,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no foreground pixels in training corpus")]
    NoForeground,
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("scorer has not been trained")]
    UntrainedScorer,
    #[error("mask is inconsistent: {0}")]
    InconsistentMask(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("need at least {needed} pixels for clustering, got {got}")]
    TooFewPixels { needed: usize, got: usize },
    #[error("color model needs at least 5 distinct centroids, found {found}")]
    DegenerateColorModel { found: usize },
    #[error("invalid color model: {0}")]
    InvalidColorModel(String),
    #[error("berry instance is empty")]
    EmptyInstance,
    #[error("classifications mix bogs or dates: {0}")]
    MixedHistogram(String),

    #[error("ripeness ratio undefined for bog {bog}: final-date red fraction is zero")]
    UndefinedRatio { bog: String },
    #[error("dates for bog {bog} are not strictly increasing")]
    UnorderedDates { bog: String },
    #[error("series needs at least 2 dates, got {got}")]
    TooFewDates { got: usize },
    #[error("invalid risk config: {0}")]
    InvalidRiskConfig(String),

    #[error("invalid class mixture: {0}")]
    InvalidMixture(String),
    #[error("could not place berry {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("date mismatch: {0}")]
    DateMismatch(String),
}

pub type Result<T> = core::result::Result<T, Error>;
