use thiserror::Error;

/// Errors raised by estimation, validation and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {message}")]
    Validation { message: String, rows: Vec<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("positivity violated: propensity of unit {unit} for group {group} is {value}")]
    Positivity { unit: usize, group: usize, value: f64 },

    #[error("quasi-separation: coefficient magnitude {magnitude:.3} exceeds {bound}")]
    QuasiSeparation { magnitude: f64, bound: f64 },

    #[error("nonconvergence: {reason} after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        reason: String,
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("nonconvergence: separation in survival ordering (|tau| = {magnitude:.2})")]
    SurvivalSeparation { magnitude: f64 },

    #[error("singular matrix in {context} (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("no events in cohort")]
    NoEvents,

    #[error("trimming removes every unit of treatment group {group}")]
    TrimmedGroup { group: usize },

    #[error("bootstrap unstable: {dropped} of {requested} replicates dropped ({reasons})")]
    BootstrapUnstable {
        dropped: usize,
        requested: usize,
        reasons: String,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("study aborted: {failed} of {replicates} replicates failed")]
    StudyAborted { failed: usize, replicates: usize },
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>, rows: Vec<usize>) -> Self {
        Error::Validation {
            message: message.into(),
            rows,
        }
    }

    /// True for failures of an iterative solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SurvivalSeparation { .. }
                | Error::QuasiSeparation { .. }
                | Error::Singular { .. }
                | Error::BootstrapUnstable { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
