use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no seed accepted ({candidates} candidate(s) scored)")]
    NoSeed { candidates: usize },

    #[error("aorta not found in scanned slices")]
    AortaNotFound,

    #[error("non-convergence after {iterations} iterations (residual {residual:.6e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("CFL condition violated: dt * max speed = {value:.4} > {limit}")]
    Cfl { value: f64, limit: f64 },

    #[error("path descent stagnated after {} points", partial.len())]
    Stagnation { partial: Vec<[f64; 3]> },

    #[error("stage `{stage}` failed")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data/format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Io { .. }
            | Error::Format(_)
            | Error::GeometryMismatch(_)
            | Error::Empty(_)
            | Error::NoSeed { .. }
            | Error::AortaNotFound => 2,
            Error::NonConvergence { .. } | Error::Cfl { .. } | Error::Stagnation { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    /// Innermost error, unwrapping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
