use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("could not decode PNG: {0}")]
    Decode(String),

    #[error("could not encode PNG: {0}")]
    Encode(String),

    #[error("unsupported PNG bit depth {0} (expected 8 or 16)")]
    UnsupportedBitDepth(u8),

    #[error("invalid channel count {0} (expected 1, 3 or 4)")]
    InvalidChannels(usize),

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trimap has no known pixels; the system would be singular")]
    NoKnownPixels,

    #[error("CG breakdown at iteration {iteration}: curvature {curvature:e} is not positive")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("matrix is not factorizable: pivot failure persisted up to shift {shift:e}")]
    NotFactorizable { shift: f64 },

    #[error("incomplete Cholesky factor exceeds the fill cap of {cap} entries")]
    FillLimitExceeded { cap: usize },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("benchmark: {0}")]
    Benchmark(String),

    #[error("dataset {0} contains no case directories")]
    EmptyDataset(PathBuf),

    #[error("all {0} benchmark cases failed")]
    AllCasesFailed(usize),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
