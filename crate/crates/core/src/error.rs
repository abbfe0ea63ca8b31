use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("no active voxels")]
    EmptyMask,

    #[error("node index {index} out of range for {count} nodes")]
    NodeOutOfRange { index: usize, count: usize },

    #[error("power iteration did not converge after {iters} iterations (best estimate {estimate})")]
    NoConvergence { iters: usize, estimate: f64 },

    #[error("iteration diverged at step {step}: |beta|={beta_norm:e}, |v|={v_norm:e}; step size too large?")]
    Diverged {
        step: usize,
        beta_norm: f64,
        v_norm: f64,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
