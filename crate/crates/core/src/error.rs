use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("constraint set is empty")]
    Infeasible,

    #[error("invalid splitting: {0}")]
    InvalidSplitting(String),

    #[error("operator is not strongly monotone (mu = {mu:e})")]
    NotStronglyMonotone { mu: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is singular")]
    Singular,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("state matrix A is singular")]
    SingularA,

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("invalid scenario: {0}")]
    SpecError(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Infeasible => "infeasible",
            Error::InvalidSplitting(_) => "invalid_splitting",
            Error::NotStronglyMonotone { .. } => "not_strongly_monotone",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Singular => "singular",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::SingularA => "singular_a",
            Error::NoConvergence(_) => "no_convergence",
            Error::SpecError(_) => "spec_error",
            Error::AtStep { source, .. } => source.kind(),
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
