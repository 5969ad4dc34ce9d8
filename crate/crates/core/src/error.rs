use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("matrix is rank deficient: {rank} of {dim} eigenvalues above tolerance")]
    RankDeficient { rank: usize, dim: usize },

    #[error("optimization diverged at iteration {iteration}: {what}")]
    Diverged { iteration: usize, what: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the `isw` binary.
    ///
    /// 0 success, 1 verification or training failure, 2 invalid input or
    /// config, 3 IO error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) | Error::Diverged { .. } => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
