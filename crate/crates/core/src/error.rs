use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("expected a scalar-shaped tensor, got {0:?}")]
    Rank(Vec<usize>),

    #[error("tensor handle belongs to a different tape")]
    ForeignTensor,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("AFU hidden width must be at least 1")]
    InvalidWidth,

    #[error("invalid range: min {min} must be below max {max}")]
    Range { min: f64, max: f64 },

    #[error("need at least {min} sample points, got {got}")]
    TooFewPoints { min: usize, got: usize },

    #[error("invalid label {label}: {reason}")]
    Label { label: i64, reason: String },

    #[error(
        "unknown activation '{0}' (valid: linear, relu, leaky_relu, sigmoid, tanh, swish, mish)"
    )]
    UnknownActivation(String),

    #[error("bad IDX magic number in {file}: expected {expected}, found {actual}")]
    Format {
        file: String,
        expected: u32,
        actual: u32,
    },

    #[error("IDX data truncated in {file}: need {expected} bytes, have {actual}")]
    Length {
        file: String,
        expected: usize,
        actual: usize,
    },

    #[error("image and label files disagree: {images} images vs {labels} labels")]
    Consistency { images: usize, labels: usize },

    #[error("requested {requested} samples from a dataset of {available}")]
    Size { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

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
}
