use thiserror::Error;

use crate::weights::WeightSolution;

pub type Result<T> = std::result::Result<T, OedError>;

#[derive(Debug, Error)]
pub enum OedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    /// The weight solver hit its iteration cap. The best iterate is attached.
    #[error("weight optimisation did not converge in {iterations} iterations (kkt residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Box<WeightSolution>,
    },

    #[error("kernel matrix is not positive definite")]
    SingularKernel,

    #[error("Sobol dimension {requested} is not supported (maximum {max})")]
    UnsupportedDimension { requested: usize, max: usize },

    #[error("model produced a non-finite value: {0}")]
    NonFiniteModel(String),

    #[error("argument outside the model domain: {0}")]
    Domain(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("initialization failed: {0}")]
    Initialization(String),
}

impl OedError {
    /// True for errors caused by numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, OedError::InvalidInput(_) | OedError::Domain(_))
    }
}
