use thiserror::Error;

/// Errors produced by the solvers and field operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("marginal masses differ beyond tolerance: {0} vs {1}")]
    InfeasibleMasses(f64, f64),

    #[error("transport LP: {0}")]
    Lp(String),

    #[error("csv parse error at {path}:{line}: {msg}")]
    Csv {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
