//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use reig_core::estimators::{EstimatorConfig, ScorerTraining};
use reig_core::proposals::ProposalTraining;
use reig_core::robust::{check_epsilon, RobustMode};

use crate::models::ModelName;
use crate::{config_error, Result};

/// Environment variable supplying the master seed when none is configured.
pub const SEED_ENV: &str = "REIG_LAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    Nmc,
    Vnmc,
    Ace,
    Mine,
    /// Outer Monte Carlo over a closed-form marginal.
    Exact,
}

impl EstimatorName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorName::Nmc => "nmc",
            EstimatorName::Vnmc => "vnmc",
            EstimatorName::Ace => "ace",
            EstimatorName::Mine => "mine",
            EstimatorName::Exact => "exact",
        }
    }
}

/// Inner proposal for `vnmc`/`ace`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProposalChoice {
    /// Trained affine-Gaussian where the model has a Gaussian prior, else the prior.
    #[default]
    Auto,
    Prior,
    /// Conjugate posterior (A/B model only).
    Exact,
    Trained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelName,
    /// Overrides of the model's default parameters.
    pub model_params: Value,
    pub estimator: EstimatorName,
    pub robust_mode: RobustMode,
    pub epsilon: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    /// `None` falls back to the seed environment variable, then to 0.
    pub seeds: Option<Vec<u64>>,
    /// Design labels to evaluate; `None` means the model's whole grid.
    pub designs: Option<Vec<String>>,
    pub proposal: ProposalChoice,
    /// Directory caching trained proposals as JSON.
    pub proposal_cache: Option<PathBuf>,
    pub proposal_training: ProposalTraining,
    pub scorer_training: ScorerTraining,
    /// Enumerate θ and y exactly for models with finite support.
    pub enumerate: bool,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Record wall-clock time; when off, `runtime_ms` is 0 so output is reproducible byte for byte.
    pub timing: bool,
    /// Output CSV path; `None` writes to stdout.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            model: ModelName::Ab,
            model_params: Value::Null,
            estimator: EstimatorName::Nmc,
            robust_mode: RobustMode::None,
            epsilon: vec![0.0],
            n1: e.n1,
            n2: e.n2,
            m: e.m,
            seeds: None,
            designs: None,
            proposal: ProposalChoice::Auto,
            proposal_cache: None,
            proposal_training: ProposalTraining::default(),
            scorer_training: ScorerTraining::default(),
            enumerate: true,
            workers: 1,
            timing: true,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_error(format!("invalid run configuration: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Seeds after applying the environment default.
    pub fn resolved_seeds(&self) -> Result<Vec<u64>> {
        if let Some(s) = &self.seeds {
            return Ok(s.clone());
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(|s| vec![s])
                .map_err(|_| config_error(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
            Err(_) => Ok(vec![0]),
        }
    }

    pub fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        EstimatorConfig { n1: self.n1, n2: self.n2, m: self.m, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_empty() {
            return Err(config_error("epsilon list must not be empty"));
        }
        for e in &self.epsilon {
            check_epsilon(*e).map_err(|e| config_error(e.to_string()))?;
        }
        if self.resolved_seeds()?.is_empty() {
            return Err(config_error("seed list must not be empty"));
        }
        self.estimator_config(0).validate().map_err(|e| config_error(e.to_string()))?;
        if matches!(self.designs.as_deref(), Some([])) {
            return Err(config_error("design list must not be empty when given"));
        }
        Ok(())
    }
}
