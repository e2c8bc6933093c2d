use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("design matrix has no retained rows")]
    EmptyDesign,
    #[error("bad knot vector: {0}")]
    BadKnots(String),
    #[error("penalized normal equations are singular")]
    RankDeficient,
    #[error("too few rows: need {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("term `{term}` has no coefficient for level {level}")]
    UnseenLevel { term: String, level: i64 },
    #[error("missing feature `{0}`")]
    MissingFeature(String),
    #[error("candidate `{0}` has zero variance")]
    DegenerateCandidate(String),
    #[error("no candidate produced a viable model")]
    NoViableModel,
    #[error("fold needs history from {needed}, data starts {available}")]
    InsufficientHistory { needed: NaiveDate, available: NaiveDate },
    #[error("period of {days} days is shorter than {needed} days")]
    PeriodTooShort { days: i64, needed: i64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("measurements have zero variance")]
    ZeroVariance,
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
    #[error("no overlapping days between predictions and measurements")]
    NoOverlap,
    #[error("unknown station `{0}`")]
    UnknownStation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
