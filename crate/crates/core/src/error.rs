use std::path::PathBuf;

/// Errors raised while validating inputs, fitting nuisances or evaluating estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: &'static str, row: usize },

    #[error("need at least {required} observations, got {got}")]
    TooFewObservations { required: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate bandwidth: input has zero spread")]
    DegenerateBandwidth,

    #[error("singular fit: design matrix has rank {rank} < {columns} columns")]
    SingularFit { rank: usize, columns: usize },

    #[error("no observation within the kernel window at t = {t}")]
    EmptyWindow { t: f64 },

    #[error("empty level set at t = {t}: conditional density vanishes at every sample point")]
    EmptyLevelSet { t: f64 },

    #[error("integration grid [{lo}, {hi}] does not cover the required range [{need_lo}, {need_hi}]")]
    GridCoverage {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("non-numeric cell `{value}` in column `{column}` at data row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("column `{0}` has zero variance and cannot be standardized")]
    ZeroVariance(String),

    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad user input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        if let Error::Io { source, .. } = self {
            return source.kind() == std::io::ErrorKind::NotFound;
        }
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NonFinite { .. }
                | Error::TooFewObservations { .. }
                | Error::InvalidConfig(_)
                | Error::MissingColumn(_)
                | Error::NonNumeric { .. }
                | Error::ZeroVariance(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
