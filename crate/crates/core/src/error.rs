use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeblurError {
    #[error("kernel size must be odd and >= 1, got {0}")]
    EvenKernelSize(usize),

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("image dimensions mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("image {0}x{1} is smaller than the required {2}x{2} window")]
    ImageTooSmall(usize, usize, usize),

    #[error("patch must be at least 3x3, got {0}x{1}")]
    PatchTooSmall(usize, usize),

    #[error("empty image")]
    EmptyImage,

    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("accumulator configs differ: {0}")]
    ConfigMismatch(String),

    #[error("filter solve produced non-finite taps (bucket {0})")]
    NonFiniteFilter(usize),

    #[error("filterbank file is not DFBK: {0}")]
    BadMagic(PathBuf),

    #[error("unsupported filterbank version {0}")]
    UnsupportedVersion(u16),

    #[error("corrupt filterbank: {0}")]
    CorruptBank(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("reference Q must be positive, got {0}")]
    NonPositiveQ(f64),

    #[error("blending needs at least 2 candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("blend round would drive a weight negative (w[{0}] = {1:.6})")]
    RoundRefused(usize, f64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl DeblurError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DeblurError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DeblurError>;
