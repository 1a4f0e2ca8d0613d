use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polygon is degenerate (|area| = {area:e} mm²)")]
    DegeneratePolygon { area: f64 },

    #[error("grid spacing {spacing} mm is coarser than min(box)/10 = {limit} mm")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("step {step}: removed mass {removed} g is not below current mass {current} g")]
    MassUnderflow { step: usize, removed: f64, current: f64 },

    #[error("step {step}: removed volume {removed} mm³ is not below current volume {current} mm³")]
    VolumeUnderflow { step: usize, removed: f64, current: f64 },

    #[error("voxel grid needs {cells} cells, budget is {cap}")]
    OutOfMemoryBudget { cells: u64, cap: u64 },

    #[error("incompatible inputs: {0}")]
    IncompatibleInputs(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unsupported motion `{code}` (only G0/G1 linear moves are accepted)")]
    UnsupportedMotion { line: usize, code: String },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
