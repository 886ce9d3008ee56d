use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input.
    #[error("invalid input: {0}")]
    Input(String),

    /// Input that is well-formed but makes the requested quantity undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigensolver did not converge after {matvecs} matvecs (best residual {best_residual:.3e}, tol {tol:.1e})")]
    NoConvergence {
        matvecs: usize,
        best_residual: f64,
        tol: f64,
    },

    #[error("iteration {iteration}, cluster {cluster}: {source}")]
    Solver {
        iteration: usize,
        cluster: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all {restarts} restart(s) failed; first error: {first}")]
    AllRestartsFailed { restarts: usize, first: String },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
