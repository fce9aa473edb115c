use thiserror::Error;

/// Errors produced by the forest library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {row}: expected {expected} covariates, found {found}")]
    InconsistentWidth {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {col}: covariate {value} is outside [0, 1]")]
    CovariateOutOfRange { row: usize, col: usize, value: f64 },

    #[error("row {row}: response {value} is not finite")]
    NonFiniteResponse { row: usize, value: f64 },

    #[error("row {row}: treatment {value} is not 0 or 1")]
    InvalidTreatment { row: usize, value: f64 },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("query has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("query coordinate {col} = {value} is outside [0, 1]")]
    QueryOutOfRange { col: usize, value: f64 },

    #[error("propensity {value} at row {row} is outside (0, 1)")]
    PropensityDomain { row: usize, value: f64 },

    #[error("overlap violation: {count} propensities outside ({eps}, {upper})", upper = 1.0 - eps)]
    OverlapViolation { count: usize, eps: f64 },

    #[error("fold {fold}: treatment arm {arm} is empty in the training complement")]
    EmptyArm { fold: usize, arm: u8 },

    #[error("statistic {value} at index {index} must be positive")]
    NonPositiveStatistic { index: usize, value: f64 },

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 3 for infeasible configurations,
    /// 2 for every other validation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 3,
            _ => 2,
        }
    }
}
