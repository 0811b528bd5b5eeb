use std::path::PathBuf;

/// Errors produced by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("Newton iteration did not converge at step {step} (residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solver failed at step {step}: {message}")]
    Solver { step: usize, message: String },

    #[error("forward solve failed at perturbed parameter value {value:e}: {source}")]
    Perturbed {
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
