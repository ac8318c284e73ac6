use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Variant names double as the
/// short error names printed by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is singular to working precision (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema violation at row {row}: {message}")]
    SchemaViolation { row: usize, message: String },

    #[error("file has no data rows")]
    EmptyFile,

    #[error("log transform of non-positive value {value} in column '{column}'")]
    NonPositiveLog { column: String, value: f64 },

    #[error("column '{column}' has zero variance")]
    ZeroVariance { column: String },

    #[error("bad size: {0}")]
    BadSize(String),

    #[error("missingness indicator is constant ({observed} of {n} observed)")]
    AllObservedOrAllMissing { observed: usize, n: usize },

    #[error("iteratively reweighted least squares did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("too few complete cases: need {needed}, have {found}")]
    TooFewCompleteCases { needed: usize, found: usize },

    #[error("outcome basis design matrix is rank deficient")]
    RankDeficientBasis,

    #[error("observed labels contain a single class")]
    SingleClass,

    #[error("no complete cases")]
    NoCompleteCases,

    #[error("bad lambda grid: {0}")]
    BadGrid(String),

    #[error("unknown setting id {0} (expected 1-4)")]
    BadSettingId(u32),

    #[error("summary of an empty sample")]
    Empty,

    #[error("propensity values unavailable: {0}")]
    MissingPropensity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short, stable name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::Singular { .. } => "Singular",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::DegenerateData(_) => "DegenerateData",
            Error::ParseError { .. } => "ParseError",
            Error::SchemaViolation { .. } => "SchemaViolation",
            Error::EmptyFile => "EmptyFile",
            Error::NonPositiveLog { .. } => "NonPositiveLog",
            Error::ZeroVariance { .. } => "ZeroVariance",
            Error::BadSize(_) => "BadSize",
            Error::AllObservedOrAllMissing { .. } => "AllObservedOrAllMissing",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::TooFewCompleteCases { .. } => "TooFewCompleteCases",
            Error::RankDeficientBasis => "RankDeficientBasis",
            Error::SingleClass => "SingleClass",
            Error::NoCompleteCases => "NoCompleteCases",
            Error::BadGrid(_) => "BadGrid",
            Error::BadSettingId(_) => "BadSettingId",
            Error::Empty => "Empty",
            Error::MissingPropensity(_) => "MissingPropensity",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ModelFormat(_) => "ModelFormat",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
