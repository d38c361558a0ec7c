use std::path::PathBuf;

use thiserror::Error;
use tremor_tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("point ({lon}, {lat}) lies outside the raster")]
    OutOfBounds { lon: f64, lat: f64 },

    #[error("placed only {achieved} of {requested} buildings without overlap")]
    Generation { achieved: usize, requested: usize },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("checksum mismatch for example {example_id}")]
    Integrity { example_id: String },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("train/validation leakage: {} shared example id(s): {}", ids.len(), ids.join(", "))]
    Leakage { ids: Vec<String> },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by bad input data (as opposed to bad usage).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Usage(_) | Error::Config(_))
    }
}
