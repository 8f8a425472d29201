//! KL-ball dual solves and the robust EIG pipelines built on them.
//!
//! For a (weighted) empirical distribution over values `d`, the worst case of
//! `E_q[d]` over `KL(q‖p) ≤ ε` is `−M_ε(d)` with
//!
//! ```text
//! M_ε(d) = inf_{λ≥0}  λε + λ·ln Σᵢ wᵢ exp(−dᵢ/λ)
//! ```
//!
//! [`dual_min`] returns `r = −M_ε(d)`, which always lies in `[min d, mean d]`.
//! [`dual_max`] is the risk-loving mirror `inf λε + λ·ln Σ wᵢ exp(dᵢ/λ)`,
//! lying in `[mean d, max d]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{divergence_samples, weighted_mean, DivergenceSamples, EstimatorConfig, InnerScheme};
use crate::models::ExperimentModel;
use crate::solver::brent_minimize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualBoundary {
    /// `0 < λ* < ∞`, found numerically.
    Interior,
    /// `λ* = 0`: the worst case concentrates on the extreme value.
    LambdaZero,
    /// `ε = 0`: `λ* = ∞` and the value is the mean.
    EpsilonZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualResult {
    /// `0` at the boundary, `+∞` for `ε = 0`.
    pub lambda_star: f64,
    /// Optimal dual objective: `M_ε` for [`dual_min`], `R_ε` for [`dual_max`].
    pub value: f64,
    /// `−M_ε` for [`dual_min`], `R_ε` for [`dual_max`].
    pub robust_value: f64,
    /// `∂value/∂d`; sums to −1 for [`dual_min`] and +1 for [`dual_max`].
    pub subgradient: Vec<f64>,
    pub boundary: DualBoundary,
    /// Number of indices attaining the extreme value when `λ* = 0`.
    pub extreme_multiplicity: usize,
}

/// Validate `ε` as a KL radius.
pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    Ok(())
}

fn normalised_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(invalid(format!("{} weights for {n} values", w.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("weights must be finite and nonnegative"));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(invalid("weights must have positive total mass"));
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

/// `g(λ) = λε − d_min + λ·ln Σ wᵢ exp(−aᵢ/λ)`, with `aᵢ = dᵢ − d_min ≥ 0`.
fn objective(lambda: f64, epsilon: f64, d_min: f64, gaps: &[f64], w: &[f64]) -> f64 {
    let s: f64 = gaps.iter().zip(w).map(|(a, wi)| wi * libm::exp(-a / lambda)).sum();
    lambda * epsilon - d_min + lambda * libm::log(s)
}

/// [`dual_min`] with probability weights on the entries of `d`
/// (`None` means equal weights, i.e. the empirical distribution).
pub fn dual_min_weighted(d: &[f64], weights: Option<&[f64]>, epsilon: f64) -> Result<DualResult> {
    if d.is_empty() {
        return Err(invalid("dual solve needs at least one value"));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(invalid("dual solve needs finite values"));
    }
    check_epsilon(epsilon)?;
    let w = normalised_weights(d.len(), weights)?;

    if epsilon == 0.0 {
        // same arithmetic as the plain estimators, so ε = 0 reproduces them bit for bit
        let mean = weighted_mean(d, weights);
        return Ok(DualResult {
            lambda_star: f64::INFINITY,
            value: -mean,
            robust_value: mean,
            subgradient: w.iter().map(|p| -p).collect(),
            boundary: DualBoundary::EpsilonZero,
            extreme_multiplicity: 0,
        });
    }

    let support = || d.iter().zip(&w).filter(|(_, p)| **p > 0.0).map(|(x, _)| *x);
    let d_min = support().fold(f64::INFINITY, f64::min);
    let d_max = support().fold(f64::NEG_INFINITY, f64::max);
    let (mut mass_at_min, mut first_min, mut multiplicity) = (0.0, usize::MAX, 0);
    for (i, (x, p)) in d.iter().zip(&w).enumerate() {
        if *x == d_min && *p > 0.0 {
            mass_at_min += p;
            multiplicity += 1;
            first_min = first_min.min(i);
        }
    }

    // g'(0⁺) = ε + ln W_min, so λ* = 0 exactly when ε ≥ −ln W_min. The few-ulp
    // slack lets ε = ln N (from any ln implementation) land on the boundary.
    let threshold = match weights {
        None => libm::log(d.len() as f64 / multiplicity as f64),
        Some(_) => -libm::log(mass_at_min),
    };
    if d_max == d_min || epsilon >= threshold * (1.0 - 4.0 * f64::EPSILON) {
        let mut subgradient = vec![0.0; d.len()];
        subgradient[first_min] = -1.0;
        return Ok(DualResult {
            lambda_star: 0.0,
            value: -d_min,
            robust_value: d_min,
            subgradient,
            boundary: DualBoundary::LambdaZero,
            extreme_multiplicity: multiplicity,
        });
    }

    let spread = d_max - d_min;
    let gaps: Vec<f64> = d.iter().map(|x| x - d_min).collect();
    let g = |u: f64| objective(libm::exp(u), epsilon, d_min, &gaps, &w);
    let lo = libm::log(1e-8 * spread);
    let hi = libm::log(1e8 * spread);
    let best = brent_minimize(g, lo, hi, 1e-10, 500);
    let lambda = libm::exp(best.x);

    let raw: Vec<f64> = gaps.iter().zip(&w).map(|(a, p)| p * libm::exp(-a / lambda)).collect();
    let total: f64 = raw.iter().sum();
    Ok(DualResult {
        lambda_star: lambda,
        value: best.value,
        robust_value: -best.value,
        subgradient: raw.iter().map(|r| -r / total).collect(),
        boundary: DualBoundary::Interior,
        extreme_multiplicity: 0,
    })
}

/// Robust (worst-case) mean of the empirical distribution of `d` over a KL
/// ball of radius `epsilon`.
pub fn dual_min(d: &[f64], epsilon: f64) -> Result<DualResult> {
    dual_min_weighted(d, None, epsilon)
}

/// Risk-loving counterpart: `R_ε(d) = M_ε(−d)`.
pub fn dual_max_weighted(d: &[f64], weights: Option<&[f64]>, epsilon: f64) -> Result<DualResult> {
    let negated: Vec<f64> = d.iter().map(|x| -x).collect();
    let r = dual_min_weighted(&negated, weights, epsilon)?;
    Ok(DualResult {
        lambda_star: r.lambda_star,
        value: r.value,
        robust_value: r.value,
        subgradient: r.subgradient.iter().map(|g| -g).collect(),
        boundary: r.boundary,
        extreme_multiplicity: r.extreme_multiplicity,
    })
}

pub fn dual_max(d: &[f64], epsilon: f64) -> Result<DualResult> {
    dual_max_weighted(d, None, epsilon)
}

/// `∂M_ε/∂d` of a [`dual_min`] result.
pub fn subgradient(result: &DualResult) -> &[f64] {
    &result.subgradient
}

/// Chain rule for the robust value `r = −M_ε(d(ξ))`:
/// `∇_ξ r = −Σᵢ (∂M_ε/∂dᵢ) ∇_ξ dᵢ`, with `∇_ξ dᵢ` supplied by the caller.
pub fn design_gradient(result: &DualResult, grad_d: &[Vec<f64>]) -> Result<Vec<f64>> {
    if grad_d.len() != result.subgradient.len() {
        return Err(invalid(format!("{} gradients for {} values", grad_d.len(), result.subgradient.len())));
    }
    let dim = grad_d.first().map_or(0, Vec::len);
    if grad_d.iter().any(|g| g.len() != dim) {
        return Err(invalid("design gradients must share one dimension"));
    }
    let mut out = vec![0.0; dim];
    for (s, g) in result.subgradient.iter().zip(grad_d) {
        for (o, gk) in out.iter_mut().zip(g) {
            *o -= s * gk;
        }
    }
    Ok(out)
}

/// How per-sample estimates are turned into a reported value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustMode {
    /// Plain mean of `d`.
    None,
    /// Worst case over priors near the reference ([`dual_min`] on `d`).
    Reig,
    /// Best case ([`dual_max`] on `d`), for lower-bound estimators.
    ReigMax,
    /// Worst case over joint distributions ([`dual_min`] on per-joint-sample values).
    ReigJoint,
}

impl RobustMode {
    pub const ALL: [RobustMode; 4] = [RobustMode::None, RobustMode::Reig, RobustMode::ReigMax, RobustMode::ReigJoint];

    pub fn as_str(&self) -> &'static str {
        match self {
            RobustMode::None => "none",
            RobustMode::Reig => "reig",
            RobustMode::ReigMax => "reig_max",
            RobustMode::ReigJoint => "reig_joint",
        }
    }
}

impl core::fmt::Display for RobustMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for RobustMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        RobustMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown robust mode '{s}' (expected none, reig, reig_max or reig_joint)")))
    }
}

/// A robust post-processing of one set of divergence samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustEstimate {
    pub value: f64,
    /// `NaN` when no dual solve was involved.
    pub lambda_star: f64,
    pub boundary: Option<DualBoundary>,
    pub clip_count: usize,
}

/// Post-process fixed samples; the same `samples` may be reused across an ε sweep.
pub fn robust_value(samples: &DivergenceSamples, mode: RobustMode, epsilon: f64) -> Result<RobustEstimate> {
    check_epsilon(epsilon)?;
    let solved = |r: DualResult| RobustEstimate {
        value: r.robust_value,
        lambda_star: r.lambda_star,
        boundary: Some(r.boundary),
        clip_count: samples.clip_count,
    };
    Ok(match mode {
        RobustMode::None => {
            RobustEstimate { value: samples.mean(), lambda_star: f64::NAN, boundary: None, clip_count: samples.clip_count }
        }
        RobustMode::Reig => solved(dual_min_weighted(&samples.d, samples.weights.as_deref(), epsilon)?),
        RobustMode::ReigMax => solved(dual_max_weighted(&samples.d, samples.weights.as_deref(), epsilon)?),
        RobustMode::ReigJoint => solved(dual_min_weighted(&samples.joint, samples.joint_weights.as_deref(), epsilon)?),
    })
}

/// Sample `d` and return the REIG value (worst case over nearby priors).
pub fn reig_estimate<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    epsilon: f64,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
) -> Result<RobustEstimate> {
    check_epsilon(epsilon)?;
    robust_value(&divergence_samples(model, design, scheme, cfg)?, RobustMode::Reig, epsilon)
}

/// Sample `d` and return the risk-loving REIG-max value.
pub fn reig_max_estimate<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    epsilon: f64,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
) -> Result<RobustEstimate> {
    check_epsilon(epsilon)?;
    robust_value(&divergence_samples(model, design, scheme, cfg)?, RobustMode::ReigMax, epsilon)
}

/// Sample the joint summands and return the joint-ambiguity value.
pub fn reig_joint_estimate<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    epsilon: f64,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
) -> Result<RobustEstimate> {
    check_epsilon(epsilon)?;
    robust_value(&divergence_samples(model, design, scheme, cfg)?, RobustMode::ReigJoint, epsilon)
}

#[cfg(test)]
mod tests;
