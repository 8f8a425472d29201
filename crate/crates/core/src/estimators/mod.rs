//! Sampling-based EIG estimators and the per-θ divergence estimates that
//! feed the robust dual solves.
//!
//! Every estimator here is built from one primitive: for a prior draw θᵢ,
//! draw `N2` outcomes and average `ln p(y|θᵢ,ξ) − ln p̂(y|ξ)`. The schemes
//! differ only in how `p̂(y|ξ)` is formed.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::ExperimentModel;
use crate::numeric::{lme_unchecked, mean};
use crate::proposals::{PriorProposal, Proposal};
use crate::rng::{RandomStream, StreamRng};

mod mine;

pub use mine::{mine_divergences, mine_eig, train_scorer, ScorerNetwork, ScorerTraining, TrainedScorer};

/// Log-marginal estimates are clipped to `[-CLIP, CLIP]`.
pub const CLIP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Outer θ draws.
    pub n1: usize,
    /// Outcomes per θ.
    pub n2: usize,
    /// Inner draws for the marginal-likelihood estimate.
    pub m: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { n1: 100, n2: 10, m: 30, seed: 0 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.m == 0 {
            return Err(invalid(format!(
                "N1, N2 and M must be >= 1 (got {}, {}, {})",
                self.n1, self.n2, self.m
            )));
        }
        Ok(())
    }

    pub fn root_stream(&self) -> RandomStream {
        RandomStream::new(self.seed)
    }
}

/// How `ln p(y|ξ)` is obtained inside [`kl_per_theta`].
pub enum InnerScheme<'a, M: ExperimentModel> {
    /// Closed-form marginal; outcomes are enumerated when the model has finite support.
    Exact,
    /// Importance estimate with `M` proposal draws. `contrastive` adds the
    /// generating θ to the average (ACE); otherwise it is VNMC (NMC when the
    /// proposal is the prior).
    Nested { proposal: &'a dyn Proposal<M>, contrastive: bool },
}

impl<M: ExperimentModel> Clone for InnerScheme<'_, M> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M: ExperimentModel> Copy for InnerScheme<'_, M> {}

impl<'a, M: ExperimentModel> InnerScheme<'a, M> {
    pub fn nmc() -> Self {
        InnerScheme::Nested { proposal: &PriorProposal, contrastive: false }
    }

    pub fn vnmc(proposal: &'a dyn Proposal<M>) -> Self {
        InnerScheme::Nested { proposal, contrastive: false }
    }

    pub fn ace(proposal: &'a dyn Proposal<M>) -> Self {
        InnerScheme::Nested { proposal, contrastive: true }
    }
}

/// Estimate of `D_KL(p(y|θ,ξ) ‖ p(y|ξ))` for one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDivergence {
    pub value: f64,
    /// Per-outcome summands `ln p(y|θ) − ln p̂(y)`.
    pub joint: Vec<f64>,
    /// Outcome probabilities when outcomes were enumerated instead of sampled.
    pub joint_weights: Option<Vec<f64>>,
    pub clip_count: usize,
}

/// The vector `d` consumed by the dual solves, plus per-joint-sample summands.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceSamples {
    pub d: Vec<f64>,
    /// Probability weights of the entries of `d`; `None` means equal weights.
    pub weights: Option<Vec<f64>>,
    pub joint: Vec<f64>,
    pub joint_weights: Option<Vec<f64>>,
    pub clip_count: usize,
}

impl DivergenceSamples {
    /// Assemble equally weighted outer samples, in index order.
    pub fn from_outer(outer: Vec<ThetaDivergence>) -> Self {
        Self::assemble(outer, None)
    }

    fn assemble(outer: Vec<ThetaDivergence>, weights: Option<Vec<f64>>) -> Self {
        let n = outer.len() as f64;
        let any_inner_weights = outer.iter().any(|o| o.joint_weights.is_some());
        let mut d = Vec::with_capacity(outer.len());
        let mut joint = Vec::new();
        let mut joint_weights = Vec::new();
        let mut clip_count = 0;
        for (i, o) in outer.into_iter().enumerate() {
            let w_outer = weights.as_ref().map_or(1.0 / n, |w| w[i]);
            d.push(o.value);
            clip_count += o.clip_count;
            if any_inner_weights || weights.is_some() {
                let k = o.joint.len() as f64;
                match &o.joint_weights {
                    Some(w) => joint_weights.extend(w.iter().map(|p| p * w_outer)),
                    None => joint_weights.extend(o.joint.iter().map(|_| w_outer / k)),
                }
            }
            joint.extend(o.joint);
        }
        let joint_weights = (any_inner_weights || weights.is_some()).then_some(joint_weights);
        Self { d, weights, joint, joint_weights, clip_count }
    }

    /// The plain EIG estimate: the (weighted) mean of `d`.
    pub fn mean(&self) -> f64 {
        weighted_mean(&self.d, self.weights.as_deref())
    }

    /// Standard error of [`Self::mean`] over the outer samples (0 for enumerations).
    pub fn standard_error(&self) -> f64 {
        if self.weights.is_some() || self.d.len() < 2 {
            return 0.0;
        }
        let n = self.d.len() as f64;
        let mean = self.mean();
        let var = self.d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        libm::sqrt(var / n)
    }
}

pub(crate) fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => values.iter().zip(w).map(|(v, p)| v * p).sum::<f64>() / w.iter().sum::<f64>(),
        None => mean(values),
    }
}

/// A point estimate with its outer-sample standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub clip_count: usize,
}

impl From<&DivergenceSamples> for EigEstimate {
    fn from(s: &DivergenceSamples) -> Self {
        Self { value: s.mean(), standard_error: s.standard_error(), clip_count: s.clip_count }
    }
}

fn clip(log_marginal: f64, clips: &mut usize) -> f64 {
    if log_marginal > CLIP {
        *clips += 1;
        CLIP
    } else if log_marginal < -CLIP {
        *clips += 1;
        -CLIP
    } else {
        log_marginal
    }
}

fn nested_log_marginal<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    theta: &[f64],
    log_lik: f64,
    y: &[f64],
    proposal: &dyn Proposal<M>,
    contrastive: bool,
    m: usize,
    rng: &mut StreamRng,
    log_w: &mut Vec<f64>,
) -> Result<f64> {
    let draws = proposal.propose(model, design, y, rng, m)?;
    log_w.clear();
    if contrastive {
        log_w.push(model.prior_log_density(theta) + log_lik - proposal.log_density(model, design, y, theta));
    }
    for (t, lq) in draws.thetas.rows().zip(&draws.log_q) {
        log_w.push(model.prior_log_density(t) + model.log_likelihood(t, design, y)? - lq);
    }
    if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::EstimatorFailure {
            message: format!("importance weights contain NaN/+inf for y = {y:?}"),
            clip_count: 0,
        });
    }
    Ok(lme_unchecked(log_w))
}

/// Estimate `D_KL(p(y|θ,ξ) ‖ p(y|ξ))` at a fixed θ by averaging over `N2`
/// outcomes drawn from `rng` (or by exact enumeration of the outcome space
/// under [`InnerScheme::Exact`] when the model has one).
pub fn kl_per_theta<M: ExperimentModel>(
    model: &M,
    theta: &[f64],
    design: &M::Design,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
    rng: &mut StreamRng,
) -> Result<ThetaDivergence> {
    cfg.validate()?;
    let mut clips = 0;
    let mut joint = Vec::new();
    let mut joint_weights = None;
    match scheme {
        InnerScheme::Exact => {
            let no_marginal = || invalid(format!("model '{}' has no closed-form marginal", model.name()));
            if let Some(outcomes) = model.enumerate_outcomes(design) {
                let mut probs = Vec::with_capacity(outcomes.len());
                for y in &outcomes {
                    let ll = model.log_likelihood(theta, design, y)?;
                    let lm = model.log_marginal(design, y).ok_or_else(no_marginal)?;
                    probs.push(libm::exp(ll));
                    joint.push(if ll == f64::NEG_INFINITY { 0.0 } else { ll - clip(lm, &mut clips) });
                }
                joint_weights = Some(probs);
            } else {
                let ys = model.sample_likelihood(theta, design, rng, cfg.n2)?;
                for y in ys.rows() {
                    let lm = model.log_marginal(design, y).ok_or_else(no_marginal)?;
                    joint.push(model.log_likelihood(theta, design, y)? - clip(lm, &mut clips));
                }
            }
        }
        InnerScheme::Nested { proposal, contrastive } => {
            let ys = model.sample_likelihood(theta, design, rng, cfg.n2)?;
            let mut log_w = Vec::with_capacity(cfg.m + 1);
            for y in ys.rows() {
                let ll = model.log_likelihood(theta, design, y)?;
                let lm = nested_log_marginal(model, design, theta, ll, y, proposal, contrastive, cfg.m, rng, &mut log_w)?;
                joint.push(ll - clip(lm, &mut clips));
            }
        }
    }
    let value = weighted_mean(&joint, joint_weights.as_deref());
    if !value.is_finite() || joint.iter().any(|v| !v.is_finite()) {
        return Err(Error::EstimatorFailure {
            message: format!("non-finite divergence estimate {value} at θ = {theta:?}"),
            clip_count: clips,
        });
    }
    Ok(ThetaDivergence { value, joint, joint_weights, clip_count: clips })
}

/// Outer sample `i`: draw θᵢ from `root.substream(i)` and estimate its divergence
/// with the same stream. Independent of evaluation order.
pub fn outer_sample<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
    root: RandomStream,
    index: usize,
) -> Result<ThetaDivergence> {
    let mut rng = root.substream(index as u64).rng();
    let draws = model.sample_prior(&mut rng, 1)?;
    kl_per_theta(model, draws.thetas.row(0), design, scheme, cfg, &mut rng)
}

/// Exact divergences over an enumerable prior, if the model and scheme allow it.
pub fn enumerated_divergences<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    cfg: &EstimatorConfig,
) -> Option<Result<DivergenceSamples>> {
    let support = model.enumerate_prior()?;
    model.enumerate_outcomes(design)?;
    let mut rng = cfg.root_stream().rng();
    let mut run = || {
        let mut outer = Vec::with_capacity(support.len());
        let mut weights = Vec::with_capacity(support.len());
        for (theta, p) in &support {
            if *p > 0.0 {
                outer.push(kl_per_theta(model, theta, design, InnerScheme::Exact, cfg, &mut rng)?);
                weights.push(*p);
            }
        }
        Ok(DivergenceSamples::assemble(outer, Some(weights)))
    };
    Some(run())
}

/// Algorithm steps 1–2: `N1` prior draws and their divergence estimates.
/// Under [`InnerScheme::Exact`] a finite model is enumerated exactly instead.
pub fn divergence_samples<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
) -> Result<DivergenceSamples> {
    cfg.validate()?;
    if let InnerScheme::Exact = scheme {
        if let Some(result) = enumerated_divergences(model, design, cfg) {
            return result;
        }
    }
    let root = cfg.root_stream();
    let outer = (0..cfg.n1)
        .map(|i| outer_sample(model, design, scheme, cfg, root, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DivergenceSamples::from_outer(outer))
}

/// Nested Monte Carlo: prior draws as the inner proposal.
pub fn nmc_eig<M: ExperimentModel>(model: &M, design: &M::Design, cfg: &EstimatorConfig) -> Result<EigEstimate> {
    Ok((&divergence_samples(model, design, InnerScheme::nmc(), cfg)?).into())
}

/// Variational NMC; an upper bound on EIG in expectation for finite `M`.
pub fn vnmc_eig<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    proposal: &dyn Proposal<M>,
    cfg: &EstimatorConfig,
) -> Result<EigEstimate> {
    Ok((&divergence_samples(model, design, InnerScheme::vnmc(proposal), cfg)?).into())
}

/// Adaptive contrastive estimation; a lower bound on EIG in expectation.
pub fn ace_eig<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    proposal: &dyn Proposal<M>,
    cfg: &EstimatorConfig,
) -> Result<EigEstimate> {
    Ok((&divergence_samples(model, design, InnerScheme::ace(proposal), cfg)?).into())
}

/// Outer Monte Carlo over a closed-form marginal (exact for finite models).
pub fn exact_marginal_eig<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    cfg: &EstimatorConfig,
) -> Result<EigEstimate> {
    Ok((&divergence_samples(model, design, InnerScheme::Exact, cfg)?).into())
}
