use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the navigation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("single-step rotation of {angle:.4} rad exceeds pi (sample rate too low for the angular rate)")]
    RotationTooLarge { angle: f64 },

    #[error("time step {dt} s outside (0, {max}] s")]
    BadTimeStep { dt: f64, max: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("filter diverged: {0}")]
    Diverged(String),

    #[error("{0}")]
    Training(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Json { .. } => 2,
            Error::Diverged(_) | Error::Training(_) | Error::NonFinite(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
