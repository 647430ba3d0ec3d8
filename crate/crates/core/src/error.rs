use thiserror::Error;

use crate::domain::ComplianceType;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("monotonicity violation: W(0)=1, W(1)=0 describes a defier")]
    MonotonicityViolation,

    #[error("invalid config `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },

    #[error("no compliers in the population")]
    NoCompliers,

    #[error("no compliers in the current draw")]
    NoCompliersInDraw,

    #[error("potential outcome cell {cell} is undefined for a {compliance} unit")]
    UndefinedCell {
        cell: String,
        compliance: ComplianceType,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unit {index} is inconsistent with every compliance type")]
    InconsistentUnit { index: usize },

    #[error("non-finite log density in {context}")]
    NumericalOverflow { context: String },

    #[error("too few draws: need at least {needed}, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("empty comparison arm {arm}")]
    EmptyArm { arm: String },

    #[error("enumeration needs {configurations} configurations, budget is {budget}")]
    TooLarge { configurations: u128, budget: u128 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("bad value at row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. } | Error::Parse { .. } | Error::UnknownKey { .. } => 2,
            Error::Schema(_)
            | Error::Value { .. }
            | Error::InconsistentUnit { .. }
            | Error::EmptyArm { .. }
            | Error::DimensionMismatch { .. }
            | Error::Json(_)
            | Error::Io(_) => 3,
            Error::AtIteration { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
