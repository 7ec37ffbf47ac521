use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid device {id}: {reason}")]
    InvalidDevice { id: usize, reason: String },

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("infeasible transmission for device {id}: rate is zero")]
    InfeasibleTransmission { id: usize },

    #[error("empty fleet")]
    EmptyFleet,

    #[error("empty problem")]
    EmptyProblem,

    #[error("solver did not converge after {iterations} iterations (objective {objective})")]
    SolverFailure {
        iterations: usize,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("cannot select {k} clients from a fleet of {n}")]
    SelectionSize { k: usize, n: usize },

    #[error("total energy must be positive")]
    ZeroEnergy,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
