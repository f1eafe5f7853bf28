use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("image is {width}x{height}, operation needs at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("raster of {width}x{height} needs {expected} samples, got {got}")]
    BadLength {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },

    #[error("intensity {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input sequence")]
    EmptyInput,

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed image file {}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },

    #[error("unsupported bit depth in {}: maxval {maxval}", path.display())]
    UnsupportedBitDepth { path: PathBuf, maxval: u32 },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("FSIM is undefined: both images have zero phase congruency everywhere")]
    UndefinedFsim,

    #[error("SNR is infinite: images are identical")]
    InfiniteSnr,

    #[error("need at least {need} frames, got {got}")]
    InsufficientFrames { need: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Png(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
