use thiserror::Error;

/// Errors produced by chaoskit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("cell {cell} out of range for a space with {n_cells} cells")]
    CellOutOfRange { cell: usize, n_cells: usize },

    #[error("cannot remove a point from empty cell {cell}")]
    EmptyCell { cell: usize },

    #[error("space mismatch: expected {expected} cells, found {found}")]
    SpaceMismatch { expected: usize, found: usize },

    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("functional has nonzero mean {0}; the pseudo-inverse of L needs a centered input")]
    NonzeroMean(f64),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
