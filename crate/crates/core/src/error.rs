use alloc::string::String;

use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampling failed: {0}")]
    SamplingFailure(String),

    #[error("estimator produced a non-finite value: {message} (clip events: {clip_count})")]
    EstimatorFailure { message: String, clip_count: usize },

    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingFailure { epoch: usize, message: String },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
