use thiserror::Error;

/// Errors raised by the policy-learning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row `{row}`: {message}")]
    Parse { row: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected} feature columns, got {found}")]
    Shape { expected: usize, found: usize },

    #[error("outcome for action `{0}` contains a single class")]
    DegenerateOutcome(String),

    #[error("labels must contain both classes")]
    SingleClassLabels,

    #[error("objective diverged (non-finite loss or gradient) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("negative reward {value} at unit {unit}, column {column}")]
    NegativeReward { unit: usize, column: usize, value: f64 },

    #[error("synthetic spec rejected: {0}")]
    Calibration(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::NotApplicable(_) | Error::Calibration(_) => ErrorClass::Config,
            Error::Divergence { .. } | Error::NegativeReward { .. } => ErrorClass::Numerical,
            Error::MissingColumn(_)
            | Error::Schema(_)
            | Error::Parse { .. }
            | Error::Shape { .. }
            | Error::DegenerateOutcome(_)
            | Error::SingleClassLabels
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
