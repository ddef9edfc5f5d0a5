use thiserror::Error;

/// Evidence that the synthesis program has no feasible point at the
/// constants that were tried.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    /// Value scale `C` the constants were calibrated from.
    pub c_guess: f64,
    /// Which constraint family produced the contradiction.
    pub reason: String,
    /// Cut rounds completed before the contradiction surfaced.
    pub rounds: usize,
}

impl std::fmt::Display for InfeasibilityCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "C = {} after {} cut rounds: {}",
            self.c_guess, self.rounds, self.reason
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("resource limit exceeded: {what} (estimated size {estimate})")]
    Resource { what: String, estimate: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("program infeasible: {0}")]
    Infeasible(Box<InfeasibilityCertificate>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
