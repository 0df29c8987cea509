use std::fmt;

use thiserror::Error;

/// Every invariant violation found by [`crate::model::SystemSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.violations.join("; "))
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    Invalid(#[from] ValidationReport),

    #[error("parse error at line {line} column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("{0}")]
    Input(String),

    #[error("delay {tau} is not a multiple of step {step}{suggestion}")]
    NonCommensurate { tau: f64, step: f64, suggestion: String },

    #[error("{0}")]
    Domain(String),

    #[error("root near boundary of box [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    RootNearBoundary { x_min: f64, x_max: f64, y_min: f64, y_max: f64 },

    #[error("boundary phase tracking exceeded {0} samples")]
    RefinementCap(usize),

    #[error("no clean quadrisection found for box [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    NoCleanSplit { x_min: f64, x_max: f64, y_min: f64, y_max: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("not a root: |det| = {residual:e} at z = {re} + {im}i")]
    NotARoot { re: f64, im: f64, residual: f64 },

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by the user's input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Parse { .. }
                | Error::Input(_)
                | Error::NonCommensurate { .. }
                | Error::Domain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
