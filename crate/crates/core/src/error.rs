use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("projection index {index} out of range for schedule with {len} projections")]
    ScheduleBounds { index: usize, len: usize },

    #[error("non-positive intensity {value} at projection {projection}, element {element}")]
    NonPositiveIntensity {
        projection: usize,
        element: usize,
        value: f64,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("angle {angle_deg}° not found in schedule")]
    AngleNotFound { angle_deg: f64 },

    #[error("partition needs {required} projections but sinogram has {available}")]
    Partition { required: usize, available: usize },

    #[error("container {path}: {msg}")]
    Container { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn container(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Container {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
