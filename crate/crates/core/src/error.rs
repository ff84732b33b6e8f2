use std::path::PathBuf;

/// Errors raised across the toolkit.
///
/// Every variant except [`Error::Io`] is a validation failure: the input was
/// readable but violated a documented precondition.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("contour needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("contour has zero total arc length")]
    DegenerateContour,
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("both classes are required, only one class present")]
    OneClassOnly,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("grid too small: need at least {min}x{min}, got {height}x{width}")]
    TooSmall {
        min: usize,
        height: usize,
        width: usize,
    },
    #[error("velocity grids disagree in shape: {0:?} vs {1:?}")]
    GridMismatch((usize, usize), (usize, usize)),
    #[error("time grids differ")]
    TimeGridMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    BadDropout(f64),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("shear rate must be non-negative, got {0}")]
    NegativeShearRate(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("grid must be strictly increasing")]
    NonMonotonicGrid,
    #[error("harmonic {harmonic} has Womersley number {alpha:.3} above the supported limit of {}", crate::hemodynamics::MAX_WOMERSLEY_ALPHA)]
    AlphaTooLarge { harmonic: usize, alpha: f64 },
    #[error("waveform is not periodic: q(0)={first}, q(T)={last}")]
    NonPeriodicWaveform { first: f64, last: f64 },
    #[error("integral of |tau| over the period is zero")]
    ZeroShearHistory,
    #[error("ensemble has no samples")]
    EmptyEnsemble,
    #[error("image {0} has contours but no calibration entry")]
    MissingCalibration(String),
    #[error("image {0} is missing its {1} contour")]
    MissingContour(String, &'static str),
    #[error("patient {0} has no clinical row")]
    MissingClinical(String),
    #[error("dataset contains no images")]
    EmptyDataset,
    #[error("need at least 3 distinct patients, got {0}")]
    TooFewPatients(usize),
    #[error("no predicted mask for image {0}")]
    MissingPrediction(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl std::fmt::Display, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_string(),
            reason: reason.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures reading or writing the filesystem.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
