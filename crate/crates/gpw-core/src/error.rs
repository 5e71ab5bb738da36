//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by measure construction, solvers and the training driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("measure must have at least one support atom")]
    EmptySupport,

    #[error("negative weight {value} at atom {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights sum to zero")]
    AllZeroWeights,

    #[error("non-finite entry encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spec: rank {rank} exceeds dimension {dim}")]
    InvalidSpec { rank: usize, dim: usize },

    #[error("sinkhorn did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("atom counts differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("instance too large for the brute-force oracle: {n}x{m} (cap {cap})")]
    TooLarge { n: usize, m: usize, cap: usize },

    #[error("oracle instance too large: {n} atoms (cap {cap})")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("layer dims must list at least an input and an output dimension")]
    BadDims,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("layer {index} is exactly zero; cannot normalize")]
    ZeroLayer { index: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
