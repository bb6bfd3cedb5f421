use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by mesh construction, assembly, solves and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gram matrix of element {element} is not positive definite")]
    GramBreakdown { element: usize },

    #[error(
        "global system is singular ({0}); a nonempty displacement boundary is required, \
         otherwise rigid translations satisfy the boundary conditions vacuously"
    )]
    IllPosed(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error(
        "no sign change for the singularity exponent on ({lo}, {hi}): residuals {f_lo:e}, {f_hi:e}"
    )]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::GramBreakdown { .. } => "gram_breakdown",
            Error::IllPosed(_) => "ill_posed",
            Error::Solver(_) => "solver",
            Error::Eigen(_) => "eigen",
            Error::NoBracket { .. } => "no_bracket",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Mismatch(_) => "mismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
