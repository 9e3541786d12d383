use thiserror::Error;

use crate::linear_vae::VaeParameters;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("signal rank k* = {k_star} exceeds dimension d = {d}")]
    InvalidRank { k_star: usize, d: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        last_finite: Box<VaeParameters>,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
