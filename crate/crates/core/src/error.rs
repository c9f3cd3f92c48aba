use thiserror::Error;

/// Errors surfaced by the solver, network, data, and training layers.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("Toeplitz system is singular or not positive definite (Levinson breakdown at order {order})")]
    Singular { order: usize },

    #[error("linear system is too ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("scene generation infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
