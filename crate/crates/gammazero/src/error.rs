//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GammaError {
    #[error("invalid action index {index} for domain with {count} actions")]
    InvalidAction { index: usize, count: usize },

    #[error("observation kind does not match action: {0}")]
    InvalidObservationPair(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("belief depleted: all particle weights vanished ({tried} retries, {zero_weight} zero-weight particles)")]
    BeliefDepleted { tried: usize, zero_weight: usize },

    #[error("observation has zero posterior probability under the belief support")]
    ZeroPosterior,

    #[error("domain does not support exact enumeration")]
    UnsupportedDomain,

    #[error("tensor shape mismatch in {role}: expected {expected}, got {actual}")]
    ShapeMismatch {
        role: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("expectimax node budget exceeded ({budget} nodes)")]
    NodeBudgetExceeded { budget: usize },

    #[error("no executable action available")]
    NoAction,

    #[error("parameter file error: {0}")]
    ParamsFile(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GammaError>;
