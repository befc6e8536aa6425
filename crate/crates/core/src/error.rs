use thiserror::Error;

/// Errors raised by sampling, fitting and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate outcome range: y_min = y_max = {0}")]
    DegenerateOutcome(f64),

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Csv {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("sub-sample size n = {n} must be smaller than N = {big_n}")]
    SampleSizeTooLarge { n: usize, big_n: usize },

    #[error("sampling function must be positive, got h = {value} on stratum `{stratum}`")]
    NonPositiveSamplingFunction { stratum: String, value: f64 },

    #[error("exact design enumeration supports N <= {max}, got N = {big_n}")]
    EnumerationTooLarge { big_n: usize, max: usize },

    #[error("rejective-infeasible: no draw of size {n} after {attempts} attempts")]
    RejectiveInfeasible { n: usize, attempts: usize },

    #[error("positivity violated in sample: {0}")]
    Positivity(String),

    #[error("degenerate correction: Gamma_n = {0} is numerically 1")]
    DegenerateGamma(f64),

    #[error("estimation did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the error stems from malformed user input rather than from
    /// the statistical procedure itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DegenerateOutcome(_)
                | Error::Csv { .. }
                | Error::SampleSizeTooLarge { .. }
                | Error::NonPositiveSamplingFunction { .. }
                | Error::EnumerationTooLarge { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
