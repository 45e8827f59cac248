use thiserror::Error;

use crate::model::Theta;

/// Errors produced by `robeta`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    /// The `1/q` power transform leaves the parameter space for the listed
    /// observations (the SMLE objective is undefined there).
    #[error("power transform infeasible at q = {q} for observations {indices:?}")]
    Infeasible { q: f64, indices: Vec<usize> },

    /// `f^c` has no finite integral (a powered shape parameter is not positive).
    #[error("powered density not integrable for observations {indices:?}")]
    NonIntegrable { indices: Vec<usize> },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(
        "optimizer did not converge after {iterations} iterations (best objective {objective})"
    )]
    NonConvergence {
        iterations: usize,
        objective: f64,
        best: Box<Theta>,
    },

    #[error("{failed} of {total} {what} failed")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        total: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse category used by front ends to pick exit codes and messages.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorCategory::Input,
            Error::InvalidModel(_) | Error::Dimension(_) | Error::Domain(_) => ErrorCategory::Input,
            Error::NonConvergence { .. } | Error::TooManyFailures { .. } => {
                ErrorCategory::Convergence
            }
            Error::Infeasible { .. } | Error::NonIntegrable { .. } | Error::Singular(_) => {
                ErrorCategory::Numerical
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Convergence,
    Numerical,
}

impl std::fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorCategory::Input => "input",
            ErrorCategory::Convergence => "convergence",
            ErrorCategory::Numerical => "numerical",
        })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
