//! Conditional proposals `q(θ | y, ξ)` for the inner marginal-likelihood
//! estimate of nested estimators.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{ABTestModel, Batch, ExperimentModel, GaussianPrior};
use crate::numeric::{lme_unchecked, normal_log_pdf};
use crate::optim::Adam;
use crate::rng::{standard_normal, RandomStream, StreamRng};

const REJECTION_CAP: usize = 1_000_000;

/// θ draws with their proposal log-densities.
#[derive(Debug, Clone)]
pub struct ProposalDraws {
    pub thetas: Batch,
    pub log_q: Vec<f64>,
}

pub trait Proposal<M: ExperimentModel>: Send + Sync {
    fn propose(
        &self,
        model: &M,
        design: &M::Design,
        y: &[f64],
        rng: &mut StreamRng,
        count: usize,
    ) -> Result<ProposalDraws>;

    fn log_density(&self, model: &M, design: &M::Design, y: &[f64], theta: &[f64]) -> f64;
}

/// The prior itself; importance weights reduce to the likelihood.
#[derive(Debug, Clone, Copy, Default)]
pub struct PriorProposal;

impl<M: ExperimentModel> Proposal<M> for PriorProposal {
    fn propose(
        &self,
        model: &M,
        _design: &M::Design,
        _y: &[f64],
        rng: &mut StreamRng,
        count: usize,
    ) -> Result<ProposalDraws> {
        let draws = model.sample_prior(rng, count)?;
        Ok(ProposalDraws { thetas: draws.thetas, log_q: draws.log_density })
    }

    fn log_density(&self, model: &M, _design: &M::Design, _y: &[f64], theta: &[f64]) -> f64 {
        model.prior_log_density(theta)
    }
}

/// Conjugate posterior of the A/B model for one design:
/// `Σ_post = (Σ_p⁻¹ + XᵀX)⁻¹`, mean `Σ_post (Σ_p⁻¹ μ_p + Xᵀ y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    pub design: usize,
    pub posterior_cov: [f64; 2],
    model: ABTestModel,
}

impl ExactPosterior {
    pub fn new(model: &ABTestModel, n_a: usize) -> Result<Self> {
        model.design_matrix(n_a)?;
        Ok(Self { design: n_a, posterior_cov: model.posterior_variance(n_a), model: model.clone() })
    }

    pub fn mean(&self, y: &[f64]) -> [f64; 2] {
        self.model.posterior_mean(self.design, y)
    }

    /// The same distribution written as an affine-Gaussian proposal.
    pub fn to_affine(&self) -> AffineGaussianProposal {
        let n = self.model.n;
        let mut a = vec![0.0; 2 * n];
        for l in 0..n {
            let k = if l < self.design { 0 } else { 1 };
            a[k * n + l] = self.posterior_cov[k];
        }
        let b = (0..2)
            .map(|k| self.posterior_cov[k] * self.model.prior_mean[k] / self.model.prior_cov[k])
            .collect();
        let log_sigma = self.posterior_cov.iter().map(|v| 0.5 * libm::log(*v)).collect();
        AffineGaussianProposal { theta_dim: 2, feature_dim: n, a, b, log_sigma }
    }

    fn check(&self, design: &usize) -> Result<()> {
        if *design != self.design {
            return Err(invalid(format!(
                "exact posterior built for n_A = {} used at n_A = {design}",
                self.design
            )));
        }
        Ok(())
    }
}

impl Proposal<ABTestModel> for ExactPosterior {
    fn propose(
        &self,
        _model: &ABTestModel,
        design: &usize,
        y: &[f64],
        rng: &mut StreamRng,
        count: usize,
    ) -> Result<ProposalDraws> {
        self.check(design)?;
        let mean = self.mean(y);
        let sd = [libm::sqrt(self.posterior_cov[0]), libm::sqrt(self.posterior_cov[1])];
        let mut thetas = Batch::with_capacity(2, count);
        let mut log_q = Vec::with_capacity(count);
        for _ in 0..count {
            let theta = [mean[0] + sd[0] * standard_normal(rng), mean[1] + sd[1] * standard_normal(rng)];
            log_q.push(normal_log_pdf(theta[0], mean[0], sd[0]) + normal_log_pdf(theta[1], mean[1], sd[1]));
            thetas.push(&theta);
        }
        Ok(ProposalDraws { thetas, log_q })
    }

    fn log_density(&self, _model: &ABTestModel, _design: &usize, y: &[f64], theta: &[f64]) -> f64 {
        let mean = self.mean(y);
        (0..2)
            .map(|k| normal_log_pdf(theta[k], mean[k], libm::sqrt(self.posterior_cov[k])))
            .sum()
    }
}

/// `θ ~ N(A f(y) + b, diag(exp(2 log_sigma)))` where `f` is the model's
/// outcome feature map. Draws outside the prior support are rejected; the
/// density is that of the untruncated Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineGaussianProposal {
    pub theta_dim: usize,
    pub feature_dim: usize,
    /// Row-major `theta_dim × feature_dim`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl AffineGaussianProposal {
    /// `A = 0`, `b = μ_p`, `σ = σ_p`: behaves exactly like the prior for Gaussian priors.
    pub fn from_prior(prior: &GaussianPrior, feature_dim: usize) -> Self {
        let theta_dim = prior.mean.len();
        Self {
            theta_dim,
            feature_dim,
            a: vec![0.0; theta_dim * feature_dim],
            b: prior.mean.clone(),
            log_sigma: prior.sd.iter().map(|s| libm::log(*s)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a.len() == self.theta_dim * self.feature_dim
            && self.b.len() == self.theta_dim
            && self.log_sigma.len() == self.theta_dim;
        if !ok {
            return Err(invalid("affine proposal dimensions are inconsistent"));
        }
        if self.a.iter().chain(&self.b).chain(&self.log_sigma).any(|v| !v.is_finite()) {
            return Err(invalid("affine proposal has non-finite parameters"));
        }
        Ok(())
    }

    pub fn mean(&self, features: &[f64]) -> Vec<f64> {
        (0..self.theta_dim)
            .map(|k| {
                let row = &self.a[k * self.feature_dim..(k + 1) * self.feature_dim];
                self.b[k] + row.iter().zip(features).map(|(a, f)| a * f).sum::<f64>()
            })
            .collect()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.a.clone();
        p.extend_from_slice(&self.b);
        p.extend_from_slice(&self.log_sigma);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let na = self.a.len();
        let nt = self.theta_dim;
        self.a.copy_from_slice(&p[..na]);
        self.b.copy_from_slice(&p[na..na + nt]);
        self.log_sigma.copy_from_slice(&p[na + nt..]);
    }

    fn check_features<M: ExperimentModel>(&self, model: &M, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim || model.theta_dim() != self.theta_dim {
            return Err(invalid(format!(
                "affine proposal expects θ dim {} and feature dim {}, model gives {} and {}",
                self.theta_dim,
                self.feature_dim,
                model.theta_dim(),
                features.len()
            )));
        }
        Ok(())
    }

    /// One reparameterised draw `θ = μ + σ ⊙ ε` inside the model's support.
    fn draw_supported<M: ExperimentModel>(
        &self,
        model: &M,
        mean: &[f64],
        rng: &mut StreamRng,
        eps: &mut [f64],
        theta: &mut [f64],
    ) -> Result<()> {
        for _ in 0..REJECTION_CAP {
            for k in 0..self.theta_dim {
                eps[k] = standard_normal(rng);
                theta[k] = mean[k] + libm::exp(self.log_sigma[k]) * eps[k];
            }
            if model.in_support(theta) {
                return Ok(());
            }
        }
        Err(Error::SamplingFailure(format!(
            "affine proposal produced no supported draw in {REJECTION_CAP} attempts"
        )))
    }

    fn gaussian_log_density(&self, mean: &[f64], theta: &[f64]) -> f64 {
        (0..self.theta_dim)
            .map(|k| normal_log_pdf(theta[k], mean[k], libm::exp(self.log_sigma[k])))
            .sum()
    }
}

impl<M: ExperimentModel> Proposal<M> for AffineGaussianProposal {
    fn propose(
        &self,
        model: &M,
        design: &M::Design,
        y: &[f64],
        rng: &mut StreamRng,
        count: usize,
    ) -> Result<ProposalDraws> {
        let features = model.features(design, y);
        self.check_features(model, &features)?;
        let mean = self.mean(&features);
        let mut thetas = Batch::with_capacity(self.theta_dim, count);
        let mut log_q = Vec::with_capacity(count);
        let mut eps = vec![0.0; self.theta_dim];
        let mut theta = vec![0.0; self.theta_dim];
        for _ in 0..count {
            self.draw_supported(model, &mean, rng, &mut eps, &mut theta)?;
            log_q.push(self.gaussian_log_density(&mean, &theta));
            thetas.push(&theta);
        }
        Ok(ProposalDraws { thetas, log_q })
    }

    fn log_density(&self, model: &M, design: &M::Design, y: &[f64], theta: &[f64]) -> f64 {
        let mean = self.mean(&model.features(design, y));
        self.gaussian_log_density(&mean, theta)
    }
}

/// Settings for fitting an [`AffineGaussianProposal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalTraining {
    pub epochs: usize,
    pub batch: usize,
    pub step: f64,
    /// Inner draws per outcome in the training objective. One draw gives the
    /// `KL(q‖posterior)` objective, whose gradient is far less noisy than the
    /// multi-draw bound's.
    pub inner: usize,
    /// Inner draws for the held-out bound used to pick the checkpoint.
    pub holdout_inner: usize,
    /// Linearly anneal the step to zero over the run.
    pub anneal: bool,
    /// Joint samples per epoch.
    pub train_size: usize,
    pub holdout_size: usize,
    pub seed: u64,
}

impl Default for ProposalTraining {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch: 64,
            step: 3e-2,
            inner: 1,
            holdout_inner: 1,
            anneal: true,
            train_size: 4096,
            holdout_size: 2048,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedProposal {
    pub proposal: AffineGaussianProposal,
    /// Held-out VNMC bound after each epoch; entry 0 is the initial proposal.
    pub history: Vec<f64>,
    pub best_epoch: usize,
}

struct Joint {
    thetas: Batch,
    ys: Batch,
}

fn joint_samples<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    stream: RandomStream,
    n: usize,
) -> Result<Joint> {
    let mut rng = stream.rng();
    let draws = model.sample_prior(&mut rng, n)?;
    let mut ys = Batch::with_capacity(model.outcome_dim(design), n);
    for theta in draws.thetas.rows() {
        ys.push(model.sample_likelihood(theta, design, &mut rng, 1)?.row(0));
    }
    Ok(Joint { thetas: draws.thetas, ys })
}

/// Held-out VNMC bound `mean(ln p(y|θ) − ln (1/M) Σ w_j)` with a fixed noise stream.
pub fn vnmc_bound<M: ExperimentModel>(
    proposal: &AffineGaussianProposal,
    model: &M,
    design: &M::Design,
    thetas: &Batch,
    ys: &Batch,
    inner: usize,
    stream: RandomStream,
) -> Result<f64> {
    let mut rng = stream.rng();
    let mut total = 0.0;
    let mut log_w = Vec::with_capacity(inner);
    for (theta, y) in thetas.rows().zip(ys.rows()) {
        let draws = proposal.propose(model, design, y, &mut rng, inner)?;
        log_w.clear();
        for (t, lq) in draws.thetas.rows().zip(&draws.log_q) {
            log_w.push(model.prior_log_density(t) + model.log_likelihood(t, design, y)? - lq);
        }
        total += model.log_likelihood(theta, design, y)? - lme_unchecked(&log_w);
    }
    Ok(total / thetas.len() as f64)
}

/// Fit an affine-Gaussian proposal by minimising the VNMC upper bound with
/// reparameterised draws and Adam; returns the checkpoint with the lowest
/// held-out bound (the initial prior-shaped proposal included).
pub fn train_affine_proposal<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    settings: &ProposalTraining,
) -> Result<TrainedProposal> {
    if settings.epochs == 0 || settings.batch == 0 || settings.inner == 0 || settings.holdout_inner == 0 {
        return Err(invalid("proposal training needs epochs, batch and inner counts >= 1"));
    }
    let prior = model
        .gaussian_prior()
        .ok_or_else(|| invalid(format!("model '{}' has no Gaussian prior to train against", model.name())))?;
    let root = RandomStream::new(settings.seed);
    let holdout = joint_samples(model, design, root.substream(0), settings.holdout_size)?;
    let feature_dim = model.features(design, holdout.ys.row(0)).len();
    let mut proposal = AffineGaussianProposal::from_prior(&prior, feature_dim);

    let holdout_noise = root.substream(1);
    let score = |p: &AffineGaussianProposal| {
        vnmc_bound(p, model, design, &holdout.thetas, &holdout.ys, settings.holdout_inner, holdout_noise)
    };
    let mut history = vec![score(&proposal)?];
    let mut best = (history[0], proposal.clone(), 0);

    let mut params = proposal.params();
    let mut opt = Adam::new(params.len(), settings.step);
    let dim = proposal.theta_dim;
    let prior_var: Vec<f64> = prior.sd.iter().map(|s| s * s).collect();

    let mut grad = vec![0.0; params.len()];
    let mut eps = vec![0.0; dim];
    let mut theta = vec![0.0; dim];
    let mut log_w = vec![0.0; settings.inner];
    let mut dlogw = vec![vec![0.0; 2 * dim]; settings.inner];

    for epoch in 1..=settings.epochs {
        if settings.anneal {
            opt.set_step(settings.step * (1.0 - (epoch - 1) as f64 / settings.epochs as f64));
        }
        let data = joint_samples(model, design, root.substream(2 * epoch as u64), settings.train_size)?;
        let mut rng = root.substream(2 * epoch as u64 + 1).rng();
        let mut start = 0;
        while start < data.ys.len() {
            let end = (start + settings.batch).min(data.ys.len());
            grad.iter_mut().for_each(|g| *g = 0.0);
            for idx in start..end {
                let y = data.ys.row(idx);
                let features = model.features(design, y);
                let mean = proposal.mean(&features);
                for j in 0..settings.inner {
                    proposal.draw_supported(model, &mean, &mut rng, &mut eps, &mut theta)?;
                    let lq = proposal.gaussian_log_density(&mean, &theta);
                    log_w[j] = model.prior_log_density(&theta) + model.log_likelihood(&theta, design, y)? - lq;
                    let g_lik = model.grad_log_likelihood(&theta, design, y)?;
                    for k in 0..dim {
                        let g = g_lik[k] - (theta[k] - prior.mean[k]) / prior_var[k];
                        let sigma = libm::exp(proposal.log_sigma[k]);
                        dlogw[j][k] = g;
                        dlogw[j][dim + k] = g * sigma * eps[k] + 1.0;
                    }
                }
                let lse = lme_unchecked(&log_w);
                if !lse.is_finite() {
                    return Err(Error::TrainingFailure {
                        epoch,
                        message: format!("inner estimate {lse} for outcome {idx}"),
                    });
                }
                let scale = 1.0 / (end - start) as f64;
                for j in 0..settings.inner {
                    let s = libm::exp(log_w[j] - lse) / settings.inner as f64 * scale;
                    for k in 0..dim {
                        // d(-lme)/dμ_k = -Σ s_j ∂ln w_j/∂μ_k
                        let dmu = -s * dlogw[j][k];
                        for (l, f) in features.iter().enumerate() {
                            grad[k * feature_dim + l] += dmu * f;
                        }
                        grad[dim * feature_dim + k] += dmu;
                        grad[dim * feature_dim + dim + k] -= s * dlogw[j][dim + k];
                    }
                }
            }
            opt.descend(&mut params, &grad);
            proposal.set_params(&params);
            start = end;
        }
        let bound = score(&proposal)?;
        if !bound.is_finite() {
            return Err(Error::TrainingFailure { epoch, message: format!("held-out bound {bound}") });
        }
        history.push(bound);
        if bound < best.0 {
            best = (bound, proposal.clone(), epoch);
        }
    }
    Ok(TrainedProposal { proposal: best.1, history, best_epoch: best.2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PKModel;

    #[test]
    fn exact_posterior_weights_are_constant() {
        let model = ABTestModel::perturbed();
        let mut rng = RandomStream::new(3).rng();
        for n_a in [0usize, 3, 10] {
            let q = ExactPosterior::new(&model, n_a).unwrap();
            let theta = [1.0, -2.0];
            let y = model.sample_likelihood(&theta, &n_a, &mut rng, 1).unwrap();
            let y = y.row(0);
            let draws = q.propose(&model, &n_a, y, &mut rng, 200).unwrap();
            let w: Vec<f64> = draws
                .thetas
                .rows()
                .zip(&draws.log_q)
                .map(|(t, lq)| model.prior_log_density(t) + model.log_likelihood(t, &n_a, y).unwrap() - lq)
                .collect();
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // relative spread of the weights themselves, exp(hi - lo) - 1
            assert!(libm::expm1(hi - lo) < 1e-8, "n_A={n_a}: spread {}", hi - lo);
            assert!((lo - model.log_marginal(&n_a, y).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_posterior_as_affine_has_equal_density() {
        let model = ABTestModel::perturbed();
        let q = ExactPosterior::new(&model, 4).unwrap();
        let affine = q.to_affine();
        let y: Vec<f64> = (0..10).map(|i| 0.5 * i as f64 - 1.0).collect();
        for theta in [[0.0, 0.0], [3.0, -1.0]] {
            let a = q.log_density(&model, &4, &y, &theta);
            let b = Proposal::<ABTestModel>::log_density(&affine, &model, &4, &y, &theta);
            assert!((a - b).abs() < 1e-12);
        }
        assert!(q.propose(&model, &5, &y, &mut RandomStream::new(1).rng(), 1).is_err());
    }

    #[test]
    fn prior_shaped_affine_matches_prior_proposal() {
        let model = ABTestModel::perturbed();
        let affine = AffineGaussianProposal::from_prior(&model.gaussian_prior().unwrap(), 10);
        let y = [0.0; 10];
        let s = RandomStream::new(12);
        let a = affine.propose(&model, &3, &y, &mut s.rng(), 50).unwrap();
        let p = PriorProposal.propose(&model, &3, &y, &mut s.rng(), 50).unwrap();
        for i in 0..50 {
            for k in 0..2 {
                assert!((a.thetas.row(i)[k] - p.thetas.row(i)[k]).abs() < 1e-12);
            }
            assert!((a.log_q[i] - p.log_q[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pk_affine_draws_stay_in_support() {
        let model = PKModel::default();
        let mut q = AffineGaussianProposal::from_prior(&model.gaussian_prior().unwrap(), 1);
        q.log_sigma = vec![0.0; 3];
        let draws = q.propose(&model, &1.0, &[3.0], &mut RandomStream::new(2).rng(), 500).unwrap();
        assert!(draws.thetas.rows().all(|t| t[0] > t[1]));
    }
}
