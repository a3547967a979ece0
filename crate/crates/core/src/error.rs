use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Io,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported plane count {0} (expected 1 or 3)")]
    UnsupportedPlaneCount(usize),

    #[error("unknown colormap `{0}`")]
    UnknownColormap(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("degenerate plane-induced homography (|det| = {det:e})")]
    DegenerateHomography { det: f64 },

    #[error("empty frame stack")]
    EmptyStack,

    #[error("no blob found (peak-to-background contrast {contrast:.3})")]
    NoBlobFound { contrast: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("bad magic in weights file (expected `VGGW`)")]
    BadMagic,

    #[error("unsupported weights file version {0}")]
    UnsupportedVersion(u32),

    #[error("weights file truncated")]
    TruncatedFile,

    #[error("layer `{layer}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        layer: String,
        expected: [usize; 4],
        found: [usize; 4],
    },

    #[error("required layer `{0}` missing from weights")]
    WeightsMissing(String),

    #[error("non-finite value in layer `{0}`")]
    NonFiniteWeights(String),

    #[error("image too small for metric: {width}x{height} (minimum 32x32)")]
    TooSmall { width: usize, height: usize },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Tiff(#[from] tiff::TiffError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches the file the error originated from.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::File { source, .. } => source.kind(),
            Error::Io(_)
            | Error::Image(_)
            | Error::Tiff(_)
            | Error::Json(_)
            | Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::TruncatedFile
            | Error::ShapeMismatch { .. }
            | Error::WeightsMissing(_)
            | Error::NonFiniteWeights(_) => ErrorKind::Io,
            Error::DegenerateHomography { .. }
            | Error::NoBlobFound { .. }
            | Error::NonConvergence { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Usage,
        }
    }
}
