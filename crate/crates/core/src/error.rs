use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM file {path}: {reason}")]
    MalformedPgm { path: PathBuf, reason: String },

    #[error("PGM file {0} declares maxval 0")]
    ZeroMaxval(PathBuf),

    #[error("channel dimensions differ: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("channel index {channel} out of range for image with {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("posterior undefined: all class counts are zero")]
    ZeroCounts,

    #[error("training set contains no foreground samples")]
    NoForeground,

    #[error("unsupported model format version {found} (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate distance statistics: zero variance")]
    DegenerateSigma,

    #[error("logistic regression needs both positive and negative examples")]
    SingleClass,

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("no ground-truth objects to evaluate against")]
    NoGroundTruth,

    #[error("no curve points")]
    EmptyPoints,

    #[error("{movies} movies cannot be split into {folds} folds")]
    TooFewMovies { movies: usize, folds: usize },

    #[error("could not place {0} cells without overlap")]
    PlacementFailed(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
