use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcoinError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("parity restriction violated: mask weight {0} is odd")]
    ParityRestriction(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("weight scheme violation at (x={x}, y={y}, q={q}): {reason}")]
    SchemeViolation {
        x: String,
        y: String,
        q: String,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, QcoinError>;
