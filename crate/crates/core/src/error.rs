use thiserror::Error;

use crate::fixed_point::{MfgSolution, UniquenessReport};

pub type Result<T> = std::result::Result<T, MfgError>;

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("solution blew up at time index {time_index} (|value| = {magnitude:e}); reduce dt")]
    BlowUp { time_index: usize, magnitude: f64 },

    #[error("game has no value: lower - upper = {gap:e} at p = {p:?}")]
    GameHasNoValue { gap: f64, p: Vec<f64> },

    #[error("mollifier of width {width} is under-resolved (needs at least {min_width})")]
    UnderResolved { width: f64, min_width: f64 },

    #[error("density is outside the admissible set: {0}")]
    XViolation(String),

    #[error("fixed-point iteration did not converge after {} iterations (residual {:e})", .best.iterations, .best.final_residual())]
    NotConverged { best: Box<MfgSolution> },

    #[error("multi-start branch {branch} did not converge")]
    ProbeAborted {
        branch: usize,
        partial: Box<UniquenessReport>,
    },

    #[error("{which} residual {residual:e} exceeds the near-solution budget {budget:e}")]
    ResidualTooLarge {
        which: &'static str,
        residual: f64,
        budget: f64,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MfgError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        MfgError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
