use std::path::PathBuf;

use crate::bias::BiasSettings;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated input at byte offset {offset}: {what}")]
    Truncated { offset: u64, what: &'static str },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid grid axis: {0}")]
    InvalidGrid(String),

    #[error("bias {axis} = {value} outside legal range [{min}, {max}]")]
    BiasOutOfRange {
        axis: &'static str,
        value: i32,
        min: i32,
        max: i32,
    },

    #[error("window [{start}, {start}+{length}) outside recording of {duration} us")]
    WindowOutOfRange { start: u64, length: u64, duration: u64 },

    #[error("zero-duration recording")]
    ZeroDuration,

    #[error("scene is {scene_w}x{scene_h} but sensor is {sensor_w}x{sensor_h}")]
    DimensionMismatch {
        scene_w: u16,
        scene_h: u16,
        sensor_w: u16,
        sensor_h: u16,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation failed for biases {biases}: {reason}")]
    Simulation { biases: BiasSettings, reason: String },

    #[error("manifest has no entry for biases {0}")]
    MissingEntry(BiasSettings),

    #[error("entry {0} has no cached metric {1:?}")]
    MissingMetric(BiasSettings, String),

    #[error("unknown metric {0:?}")]
    UnknownMetric(String),

    #[error("unknown feature extractor {0:?}")]
    UnknownExtractor(String),

    #[error("empty region of interest")]
    EmptyRoi,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature dimension {got} does not match model input {expected}")]
    DimensionMismatchFeatures { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    NonFiniteLoss(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML error: {0}")]
    Toml(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoAt { path, source }
    }
}
