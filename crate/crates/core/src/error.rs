use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {what}: achieved error estimate {achieved:e}")]
    NumericFailure { what: String, achieved: f64 },

    #[error("every atom is ineligible at sigma = {sigma}")]
    EmptyModel { sigma: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("training diverged at step {step} (loss {loss:e})")]
    TrainingDiverged {
        step: usize,
        loss: f64,
        /// Batch loss per step up to and including the divergent one.
        trace: Vec<f64>,
    },

    #[error("generation produced a non-finite value at step {step}")]
    GenerationFailure { step: usize },

    #[error("analytic gradient disagrees with finite differences (max relative error {max_rel_err:e})")]
    GradientCheck { max_rel_err: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(what: impl Into<String>, achieved: f64) -> Self {
        Error::NumericFailure { what: what.into(), achieved }
    }
}
