use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid header {path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("size mismatch: header declares {expected} values, payload holds {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("invalid spacing ({0}, {1}, {2}): every component must be positive and finite")]
    InvalidSpacing(f64, f64, f64),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimsMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("row {row}: coordinate ({x}, {y}, {z}) lies outside dims {dims:?}")]
    OutOfBounds {
        row: usize,
        x: i64,
        y: i64,
        z: i64,
        dims: [usize; 3],
    },

    #[error("crop window origin {origin:?} size {size:?} exceeds dims {dims:?}")]
    CropOutOfBounds {
        origin: [usize; 3],
        size: [usize; 3],
        dims: [usize; 3],
    },

    #[error("resampling to {0:?} would produce a degenerate grid")]
    DegenerateResample([usize; 3]),

    #[error("grid {dims:?} too small for a {levels}-level pyramid")]
    GridTooSmall { dims: [usize; 3], levels: usize },

    #[error("feature dimensionality mismatch: expected {expected}, got {actual}")]
    FeatureMismatch { expected: usize, actual: usize },

    #[error("k-means needs at least k={k} samples, got {samples}")]
    TooFewSamples { k: usize, samples: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("stability score needs at least 2 checkpoint masks, got {0}")]
    TooFewCheckpoints(usize),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("phantom does not fit the grid: {0}")]
    PhantomBounds(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad user input rather than the runtime.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NonFiniteLoss { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
