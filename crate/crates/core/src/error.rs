use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point coincides with a link endpoint at ({x:.6}, {y:.6})")]
    SingularCoefficient { x: f64, y: f64 },

    #[error("steering matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("unknown shape `{0}`")]
    UnknownShape(String),

    #[error("segment {index} is too short to reach a positive speed")]
    SegmentTooShort { index: usize },

    #[error("stream length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("timestamps misaligned at index {index}: {a} vs {b}")]
    Misaligned { index: usize, a: f64, b: f64 },

    #[error("no feasible start: every candidate failed to reconstruct")]
    NoFeasibleStart,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
