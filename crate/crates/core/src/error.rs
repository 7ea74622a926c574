use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numeric,
    Audit,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` declared in the schema is absent from the file")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("row {row}: seed column `{column}` is missing")]
    MissingSeed { row: usize, column: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid chain configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("too few observations: n = {n}, retained columns = {k}")]
    InsufficientData { n: usize, k: usize },

    #[error("response has a single class")]
    SingleClass,

    #[error("outcome level {0} has no observations")]
    AbsentLevel(usize),

    #[error("no convergence after {iterations} iterations (max |step| = {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("stratum {0} is empty after filtering")]
    EmptyStratum(String),

    #[error("entry `{entry}` could not be fitted: {reason}")]
    EntryFit { entry: String, reason: String },

    #[error("disclosure gate: seed cell {cell} has count {count} < {min}")]
    Gate { cell: String, count: u64, min: u64 },

    #[error("pack format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("schema hash mismatch: pack records {recorded}, content hashes to {computed}")]
    SchemaHashMismatch { recorded: String, computed: String },

    #[error("malformed pack document at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no equation for stratum {stratum} of entry `{entry}`")]
    NoEquation { entry: String, stratum: String },

    #[error("missing covariance block for entry `{0}`")]
    MissingCovariance(String),

    #[error("calibration target {target} for `{variable}` is unreachable (range {low:.6}..{high:.6})")]
    Unreachable {
        variable: String,
        target: f64,
        low: f64,
        high: f64,
    },

    #[error("audit failed: {0}")]
    Audit(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InsufficientData { .. }
            | Error::SingleClass
            | Error::AbsentLevel(_)
            | Error::NoConvergence { .. }
            | Error::Numeric(_)
            | Error::EntryFit { .. }
            | Error::Unreachable { .. } => ErrorClass::Numeric,
            Error::Audit(_) | Error::Gate { .. } => ErrorClass::Audit,
            _ => ErrorClass::Validation,
        }
    }
}
