use thiserror::Error;

/// Errors raised by mesh construction, discretization and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported polynomial order {order} (supported 0..={max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("unsupported quadrature degree {degree} (supported up to {max})")]
    UnsupportedDegree { degree: usize, max: usize },

    #[error("singular matrix (pivot {pivot:?})")]
    Singular { pivot: Option<usize> },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("condensation failed on cell {cell}: {source}")]
    Condensation {
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fixed-point iteration did not converge in {iterations} iterations")]
    Divergence { iterations: usize, history: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
