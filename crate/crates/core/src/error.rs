use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state is not on the disk boundary (distance {distance}, radius {radius})")]
    NotOnBoundary { distance: f64, radius: f64 },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("path is not admissible: obstacle {index} overlaps the earlier trajectory")]
    Inadmissible { index: usize },
    #[error("circling path has no obstacles to place")]
    CirclingPath,
    #[error("grid geometry mismatch")]
    GridMismatch,
    #[error("empty sample")]
    EmptySample,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
