use thiserror::Error;

/// Errors surfaced by model validation, lattice construction and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Validation(String),
    #[error("coefficient `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("lattice needs {required} nodes but the budget is {budget}")]
    NodeBudget { required: usize, budget: usize },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("no convergence after {iterations} iterations (last update {last_update:e})")]
    NotConverged { iterations: usize, last_update: f64 },
    #[error("lattice corruption: {0}")]
    Lattice(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
