use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("sample count {got} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("scaling factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("no fiber maximizer: coupling vanishes")]
    NoFiberMaximizer,

    #[error("fiber bracketing failed: {0}")]
    FiberBracket(String),

    #[error("projection onto G = 0 failed: dilation by {t_bar} does not fit inside r_max = {r_max}")]
    Projection { t_bar: f64, r_max: f64 },

    #[error("pair degenerated toward the excluded point (0,0)")]
    Degenerate,

    #[error("singular jacobian in newton oracle")]
    SingularJacobian,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config: {0}")]
    ConfigValue(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
