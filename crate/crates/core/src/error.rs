use thiserror::Error;

/// Errors produced by the placement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cell {index} outside grid of {n_cells} cells")]
    InvalidCell { index: usize, n_cells: usize },

    #[error("point ({x:.4}, {y:.4}) km lies outside the grid bounding box")]
    OutOfGrid { x: f64, y: f64 },

    #[error("records are not sorted by timestamp (at position {position})")]
    UnsortedRecords { position: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty problem: no cell has positive demand")]
    EmptyProblem,

    #[error("infeasible instance: row {row} can be covered by {available} stations but needs {required}")]
    InfeasibleInstance {
        row: usize,
        available: usize,
        required: u32,
    },

    #[error("layout is not feasible")]
    InfeasibleLayout,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("population too small: {size} members, need at least {needed}")]
    PopulationTooSmall { size: usize, needed: usize },

    #[error("instance too large for exhaustive search: {n_cols} columns (limit {limit})")]
    TooLarge { n_cols: usize, limit: usize },

    #[error("ingest failed: {bad} of {total} data lines rejected (limit {max_ratio})")]
    TooManyBadLines {
        bad: usize,
        total: usize,
        max_ratio: f64,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
