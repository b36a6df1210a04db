use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no input records")]
    EmptyInput,

    #[error("conflicting prices for asset {asset} on {date}")]
    ConflictingRecord { date: NaiveDate, asset: String },

    #[error("asset {asset} mapped to both {first} and {second}")]
    ConflictingIndustry {
        asset: String,
        first: String,
        second: String,
    },

    #[error("{source_name}:{line}: {message}")]
    Schema {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("at least 2 assets are required, found {found}")]
    TooFewAssets { found: usize },

    #[error("window needs {required} return rows, only {available} available")]
    InsufficientRows { required: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the numbers themselves rather than by the input files
    /// or the caller's parameters.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSymmetric { .. } | Error::NoConvergence | Error::Degenerate(_)
        )
    }

    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_))
    }
}
