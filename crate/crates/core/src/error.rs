use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    /// A face lacks the attributes baking needs (uv or normal indices), or is not a triangle.
    #[error("mesh not reconstruction-ready: face {face}: {reason}")]
    MeshNotReady { face: usize, reason: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera `{name}`: {reason}")]
    InvalidCamera { name: String, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("object not in front of camera")]
    NotInFront,

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("evaluation mask selects no elements")]
    EmptyMask,

    #[error("predictor `{predictor}` failed: {message}")]
    Predictor { predictor: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MeshParse { .. }
                | Error::MeshNotReady { .. }
                | Error::InvalidMesh(_)
                | Error::InvalidCamera { .. }
                | Error::Json(_)
                | Error::Config(_)
                | Error::Image { .. }
        )
    }
}
