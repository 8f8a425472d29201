//! Experiment orchestration around `reig-core`: JSON run configurations,
//! CSV estimate records, figure data export and the oracle report.

pub mod config;
pub mod figures;
pub mod format;
pub mod models;
pub mod record;
pub mod report;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// Malformed configuration or command line; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Every cell of a run failed; exit code 3.
    #[error("all {0} estimation cells failed")]
    AllFailed(usize),
    #[error(transparent)]
    Core(#[from] reig_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::AllFailed(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn config_error(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}
