use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the packing engine.
#[derive(Error, Debug)]
pub enum PackError {
    #[error("{format} parse error at byte {offset}: {message}")]
    Format {
        format: &'static str,
        offset: usize,
        message: String,
    },
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),
    #[error("footprint at ({x:.4}, {y:.4}) lies outside the container")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no feasible placement for object {0}")]
    NoFeasiblePlacement(String),
    #[error("resolution config error: {0}")]
    Resolution(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("empty data: {0}")]
    EmptyData(&'static str),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = PackError> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at_path(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at_path(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| PackError::Io {
            path: path.into(),
            source,
        })
    }
}
