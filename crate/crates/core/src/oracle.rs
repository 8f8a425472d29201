//! Closed-form and brute-force references: exact quantities for the
//! two-state diagnostic model, the linear-Gaussian EIG, and Gaussian KL.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::models::{DiagnosticTestModel, TestKind};
use crate::robust::{dual_min_weighted, DualResult};

fn xlogy_ratio(p: f64, num: f64, den: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * libm::log(num / den)
    }
}

/// Per-state divergences `d_θ = Σ_y p(y|θ) ln(p(y|θ)/p_r(y))` with the
/// marginal `p_r` taken under prior probability `r` of being sick.
pub fn discrete_divergences(model: &DiagnosticTestModel, test: TestKind, r: f64) -> [f64; 2] {
    let t = model.likelihood_table(test);
    let py = model.marginal(test, r);
    let d = |row: [f64; 2]| xlogy_ratio(row[0], row[0], py[0]) + xlogy_ratio(row[1], row[1], py[1]);
    [d(t[0]), d(t[1])]
}

/// Mutual information of the 2×2 channel at prior probability `r`.
pub fn discrete_eig_exact(model: &DiagnosticTestModel, test: TestKind, r: f64) -> f64 {
    let d = discrete_divergences(model, test, r);
    r * d[0] + (1.0 - r) * d[1]
}

/// Affine relaxation `E_q[ln p(y|θ)/p_p(y)]` with `q`, `p` Bernoulli(`r_q`), Bernoulli(`r_p`).
pub fn discrete_iaff_exact(model: &DiagnosticTestModel, test: TestKind, r_q: f64, r_p: f64) -> f64 {
    let d = discrete_divergences(model, test, r_p);
    r_q * d[0] + (1.0 - r_q) * d[1]
}

/// `KL(Bern(a) ‖ Bern(b))`.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    xlogy_ratio(a, a, b) + xlogy_ratio(1.0 - a, 1.0 - a, 1.0 - b)
}

/// Equispaced prior probabilities strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliPriorGrid {
    points: Vec<f64>,
}

impl BernoulliPriorGrid {
    pub const DEFAULT_RESOLUTION: usize = 100_000;
    pub const MARGIN: f64 = 1e-6;

    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(invalid("grid needs at least two points"));
        }
        let (lo, hi) = (Self::MARGIN, 1.0 - Self::MARGIN);
        let step = (hi - lo) / (resolution - 1) as f64;
        Ok(Self { points: (0..resolution).map(|k| lo + step * k as f64).collect() })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

impl Default for BernoulliPriorGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_RESOLUTION).unwrap()
    }
}

/// Endpoints of `{r : KL(Bern(r)‖Bern(r_p)) ≤ ε}` within the grid margins, by bisection.
fn kl_ball(r_p: f64, epsilon: f64) -> (f64, f64) {
    let edge = |far: f64| {
        if bernoulli_kl(far, r_p) <= epsilon {
            return far;
        }
        let (mut inside, mut outside) = (r_p, far);
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if bernoulli_kl(mid, r_p) <= epsilon {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    (edge(BernoulliPriorGrid::MARGIN), edge(1.0 - BernoulliPriorGrid::MARGIN))
}

fn ball_minimum(grid: &BernoulliPriorGrid, r_p: f64, epsilon: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    if epsilon == 0.0 {
        return (f(r_p), r_p);
    }
    let (lo, hi) = kl_ball(r_p, epsilon);
    grid.points()
        .iter()
        .copied()
        .filter(|r| bernoulli_kl(*r, r_p) <= epsilon)
        .chain([r_p, lo, hi])
        .map(|r| (f(r), r))
        .fold((f64::INFINITY, r_p), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// REIG by search: minimum of the affine relaxation over priors on `grid`
/// within the KL ball (the ball's endpoints are located by bisection and
/// added as candidates). Returns `(value, argmin r)`.
pub fn discrete_reig_grid(
    model: &DiagnosticTestModel,
    test: TestKind,
    r_p: f64,
    epsilon: f64,
    grid: &BernoulliPriorGrid,
) -> (f64, f64) {
    ball_minimum(grid, r_p, epsilon, |r| discrete_iaff_exact(model, test, r, r_p))
}

/// True robust EIG by search: minimum of the exact EIG over the same ball.
pub fn discrete_true_reig_grid(
    model: &DiagnosticTestModel,
    test: TestKind,
    r_p: f64,
    epsilon: f64,
    grid: &BernoulliPriorGrid,
) -> (f64, f64) {
    ball_minimum(grid, r_p, epsilon, |r| discrete_eig_exact(model, test, r))
}

/// REIG through the prior-weighted dual on the exact two-state divergences.
pub fn discrete_reig_dual(model: &DiagnosticTestModel, test: TestKind, r_p: f64, epsilon: f64) -> Result<DualResult> {
    let d = discrete_divergences(model, test, r_p);
    dual_min_weighted(&d, Some(&[r_p, 1.0 - r_p]), epsilon)
}

/// `½ ln det(I + X Σ Xᵀ)` for `y ~ N(Xθ, I)`, `θ ~ N(·, Σ)`. `x` is row-major
/// with one row per observation.
pub fn linear_gaussian_eig(prior_cov: &[Vec<f64>], x: &[Vec<f64>]) -> Result<f64> {
    let p = prior_cov.len();
    if prior_cov.iter().any(|row| row.len() != p) || x.iter().any(|row| row.len() != p) {
        return Err(invalid("covariance must be square and X must have one column per parameter"));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| prior_cov[i][j]);
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(invalid("covariance entries must be finite"));
    }
    let scale = sigma.amax().max(1.0);
    if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
        return Err(invalid("covariance must be symmetric"));
    }
    let min_eig = if p == 0 { 0.0 } else { sigma.clone().symmetric_eigenvalues().min() };
    if min_eig < -1e-12 * scale {
        return Err(invalid(format!("covariance is not positive semidefinite (eigenvalue {min_eig})")));
    }
    let xm = DMatrix::from_fn(x.len(), p, |i, j| x[i][j]);
    let k = DMatrix::identity(x.len(), x.len()) + &xm * &sigma * xm.transpose();
    let chol = k.cholesky().ok_or_else(|| invalid("I + XΣXᵀ is not positive definite"))?;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum();
    Ok(0.5 * log_det)
}

/// `Σᵢ (μ1ᵢ − μ0ᵢ)² / (2σᵢ²)`: KL between Gaussians sharing a diagonal covariance.
pub fn gaussian_kl(mu1: &[f64], mu0: &[f64], variances: &[f64]) -> Result<f64> {
    if mu1.len() != mu0.len() || mu1.len() != variances.len() {
        return Err(invalid("mean and variance vectors must have equal length"));
    }
    if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("variances must be positive and finite"));
    }
    Ok(mu1.iter().zip(mu0).zip(variances).map(|((a, b), v)| (a - b) * (a - b) / (2.0 * v)).sum())
}
