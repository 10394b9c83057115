use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("box lies outside the {height}x{width} frame")]
    OutOfBounds { height: usize, width: usize },

    #[error("template {rows}x{cols} is below the 4x4 minimum")]
    TemplateTooSmall { rows: usize, cols: usize },

    #[error("template {template:?} does not fit in window {window:?}")]
    TemplateLargerThanWindow {
        template: (usize, usize),
        window: (usize, usize),
    },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("prediction was produced by a different tracker state")]
    StalePrediction,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate value: {0}")]
    Degenerate(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Failure while processing one frame of a named sequence (1-based).
    #[error("{sequence}, frame {frame}: {source}")]
    AtFrame {
        sequence: String,
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// The underlying error with any frame context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtFrame { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
