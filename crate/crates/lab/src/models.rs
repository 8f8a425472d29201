//! Model registry: name → concrete model, with JSON parameter overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use reig_core::models::{ABTestModel, DiagnosticTestModel, ExperimentModel, PKModel, PreferenceModel};
use reig_core::proposals::{ExactPosterior, Proposal};

use crate::{config_error, Result};

/// Models the runner can drive.
pub trait LabModel: ExperimentModel + Clone + Send + Sync + Serialize + 'static {
    /// Exact posterior proposal for the design, when the model is conjugate.
    fn exact_posterior(&self, _design: &Self::Design) -> Option<reig_core::Result<Box<dyn Proposal<Self>>>> {
        None
    }
}

impl LabModel for DiagnosticTestModel {}
impl LabModel for PreferenceModel {}
impl LabModel for PKModel {}

impl LabModel for ABTestModel {
    fn exact_posterior(&self, design: &usize) -> Option<reig_core::Result<Box<dyn Proposal<Self>>>> {
        Some(ExactPosterior::new(self, *design).map(|p| Box::new(p) as Box<dyn Proposal<Self>>))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Diagnostic,
    Ab,
    Preference,
    Pk,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [ModelName::Diagnostic, ModelName::Ab, ModelName::Preference, ModelName::Pk];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelName::Diagnostic => "diagnostic",
            ModelName::Ab => "ab",
            ModelName::Preference => "preference",
            ModelName::Pk => "pk",
        }
    }
}

impl std::str::FromStr for ModelName {
    type Err = crate::LabError;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| config_error(format!("unknown model '{s}' (expected diagnostic, ab, preference or pk)")))
    }
}

/// Something that can be run against any registered model.
pub trait ModelVisitor {
    type Output;
    fn visit<M: LabModel>(self, model: M) -> Self::Output;
}

fn build<M: for<'de> Deserialize<'de>>(params: &Value) -> Result<M> {
    let params = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(params).map_err(|e| config_error(format!("invalid model parameters: {e}")))
}

fn checked<M>(model: M, validate: impl FnOnce(&M) -> reig_core::Result<()>) -> Result<M> {
    validate(&model).map_err(|e| config_error(e.to_string()))?;
    Ok(model)
}

/// Build the named model (its defaults overridden by `params`) and hand it to `visitor`.
pub fn with_model<V: ModelVisitor>(name: ModelName, params: &Value, visitor: V) -> Result<V::Output> {
    Ok(match name {
        ModelName::Diagnostic => visitor.visit(checked(build::<DiagnosticTestModel>(params)?, |m| m.validate())?),
        ModelName::Ab => visitor.visit(checked(build::<ABTestModel>(params)?, |m| m.validate())?),
        ModelName::Preference => visitor.visit(checked(build::<PreferenceModel>(params)?, |m| m.validate())?),
        ModelName::Pk => visitor.visit(checked(build::<PKModel>(params)?, |m| m.validate())?),
    })
}
