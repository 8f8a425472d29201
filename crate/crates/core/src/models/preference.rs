//! Censored-sigmoid preference experiment.
//!
//! `η | θ, ξ ~ N(ξ - θ, 1 + ξ²)` and the observed response is `sigmoid(η)`
//! clamped to `[γ, 1 - γ]`. The two clamp values are atoms carrying
//! probability mass; the open interval between them carries a density.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_sd, Batch, ExperimentModel, GaussianPrior, PriorDraws};
use crate::error::{invalid, Result};
use crate::numeric::{inverse_mills, log_normal_cdf, logit, normal_log_pdf, sigmoid};
use crate::rng::{standard_normal, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceModel {
    pub prior_mean: f64,
    pub prior_sd: f64,
    /// Clamp probability γ; responses live in `[γ, 1 - γ]`.
    pub censor_threshold: f64,
    pub design_min: f64,
    pub design_max: f64,
    pub design_count: usize,
}

impl Default for PreferenceModel {
    fn default() -> Self {
        Self::perturbed()
    }
}

enum Response {
    Lower,
    Upper,
    Interior(f64),
}

impl PreferenceModel {
    pub fn reference() -> Self {
        Self {
            prior_mean: 0.0,
            prior_sd: 20.0,
            censor_threshold: 0.005,
            design_min: -80.0,
            design_max: 80.0,
            design_count: 101,
        }
    }

    pub fn perturbed() -> Self {
        Self { prior_mean: -7.35, ..Self::reference() }
    }

    pub fn with_prior_mean(&self, prior_mean: f64) -> Self {
        Self { prior_mean, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        check_sd("preference prior sd", self.prior_sd)?;
        let g = self.censor_threshold;
        if !(g > 0.0 && g < 0.5) {
            return Err(invalid(format!("censor threshold must lie in (0, 1/2), got {g}")));
        }
        if self.design_count < 2 || !(self.design_min < self.design_max) {
            return Err(invalid("preference design grid needs min < max and at least 2 points"));
        }
        Ok(())
    }

    fn noise_sd(xi: f64) -> f64 {
        libm::sqrt(1.0 + xi * xi)
    }

    fn classify(&self, y: &[f64]) -> Result<Response> {
        let g = self.censor_threshold;
        match y {
            [v] if *v == g => Ok(Response::Lower),
            [v] if *v == 1.0 - g => Ok(Response::Upper),
            [v] if *v > g && *v < 1.0 - g => Ok(Response::Interior(*v)),
            _ => Err(invalid(format!("preference response {y:?} outside [γ, 1-γ]"))),
        }
    }

    /// Log-mass or log-density of `y` when `η ~ N(center, sd²)`.
    fn response_log_density(&self, response: &Response, center: f64, sd: f64) -> f64 {
        let g = self.censor_threshold;
        match response {
            Response::Lower => log_normal_cdf((logit(g) - center) / sd),
            Response::Upper => log_normal_cdf((center - logit(1.0 - g)) / sd),
            Response::Interior(v) => {
                normal_log_pdf(logit(*v), center, sd) - libm::log(v * (1.0 - v))
            }
        }
    }
}

impl ExperimentModel for PreferenceModel {
    type Design = f64;

    fn name(&self) -> &'static str {
        "preference"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn outcome_dim(&self, _design: &f64) -> usize {
        1
    }

    fn design_grid(&self) -> Vec<f64> {
        let steps = (self.design_count - 1) as f64;
        let width = self.design_max - self.design_min;
        (0..self.design_count)
            .map(|i| {
                // symmetric construction: mirror the lower half exactly
                let j = self.design_count - 1 - i;
                if j < i {
                    self.design_min + width * i as f64 / steps
                } else {
                    self.design_max - width * j as f64 / steps
                }
            })
            .collect()
    }

    fn design_label(&self, design: &f64) -> String {
        super::coordinate_label(*design)
    }

    fn design_coordinate(&self, design: &f64) -> f64 {
        *design
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        normal_log_pdf(theta[0], self.prior_mean, self.prior_sd)
    }

    fn sample_prior(&self, rng: &mut StreamRng, n: usize) -> Result<PriorDraws> {
        let mut thetas = Batch::with_capacity(1, n);
        let mut log_density = Vec::with_capacity(n);
        for _ in 0..n {
            let t = self.prior_mean + self.prior_sd * standard_normal(rng);
            thetas.push(&[t]);
            log_density.push(self.prior_log_density(&[t]));
        }
        Ok(PriorDraws { thetas, log_density })
    }

    fn log_likelihood(&self, theta: &[f64], design: &f64, y: &[f64]) -> Result<f64> {
        let response = self.classify(y)?;
        Ok(self.response_log_density(&response, design - theta[0], Self::noise_sd(*design)))
    }

    fn sample_likelihood(
        &self,
        theta: &[f64],
        design: &f64,
        rng: &mut StreamRng,
        n: usize,
    ) -> Result<Batch> {
        let g = self.censor_threshold;
        let (lo, hi) = (logit(g), logit(1.0 - g));
        let sd = Self::noise_sd(*design);
        let mut out = Batch::with_capacity(1, n);
        for _ in 0..n {
            let eta = design - theta[0] + sd * standard_normal(rng);
            let y = if eta <= lo {
                g
            } else if eta >= hi {
                1.0 - g
            } else {
                sigmoid(eta).clamp(g, 1.0 - g)
            };
            out.push(&[y]);
        }
        Ok(out)
    }

    /// Integrating θ out of a Gaussian location model gives
    /// `η | ξ ~ N(ξ - μ, 1 + ξ² + σ²)`.
    fn log_marginal(&self, design: &f64, y: &[f64]) -> Option<f64> {
        let response = self.classify(y).ok()?;
        let sd = libm::sqrt(1.0 + design * design + self.prior_sd * self.prior_sd);
        Some(self.response_log_density(&response, design - self.prior_mean, sd))
    }

    fn gaussian_prior(&self) -> Option<GaussianPrior> {
        Some(GaussianPrior { mean: vec![self.prior_mean], sd: vec![self.prior_sd] })
    }

    fn features(&self, _design: &f64, y: &[f64]) -> Vec<f64> {
        vec![logit(y[0])]
    }

    fn grad_log_likelihood(&self, theta: &[f64], design: &f64, y: &[f64]) -> Result<Vec<f64>> {
        let g = self.censor_threshold;
        let sd = Self::noise_sd(*design);
        let center = design - theta[0];
        let d = match self.classify(y)? {
            Response::Lower => inverse_mills((logit(g) - center) / sd) / sd,
            Response::Upper => -inverse_mills((center - logit(1.0 - g)) / sd) / sd,
            Response::Interior(v) => -(logit(v) - center) / (sd * sd),
        };
        Ok(vec![d])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn centered_atoms_are_symmetric() {
        let m = PreferenceModel::reference();
        let g = m.censor_threshold;
        for xi in [-30.0, 0.0, 12.5] {
            let lower = m.log_likelihood(&[xi], &xi, &[g]).unwrap();
            let upper = m.log_likelihood(&[xi], &xi, &[1.0 - g]).unwrap();
            assert!((lower - upper).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_density_value() {
        let m = PreferenceModel::reference();
        let lp = m.log_likelihood(&[0.0], &0.0, &[0.5]).unwrap();
        assert!((lp - 0.467_355).abs() < 1e-6, "{lp}");
    }

    #[test]
    fn out_of_range_response_is_rejected() {
        let m = PreferenceModel::reference();
        assert!(m.log_likelihood(&[0.0], &0.0, &[0.001]).is_err());
        assert!(m.log_likelihood(&[0.0], &0.0, &[1.0]).is_err());
    }

    #[test]
    fn grid_is_symmetric() {
        let m = PreferenceModel::default();
        let grid = m.design_grid();
        assert_eq!(grid.len(), 101);
        assert_eq!(grid[0], -80.0);
        assert_eq!(grid[100], 80.0);
        for i in 0..101 {
            assert_eq!(grid[i], -grid[100 - i]);
        }
    }

    #[test]
    fn atom_fractions_balance_at_center() {
        let m = PreferenceModel::reference();
        let ys = m.sample_likelihood(&[3.0], &3.0, &mut RandomStream::new(5).rng(), 100_000).unwrap();
        let g = m.censor_threshold;
        let low = ys.as_flat().iter().filter(|v| **v == g).count() as f64;
        let high = ys.as_flat().iter().filter(|v| **v == 1.0 - g).count() as f64;
        let n = 100_000.0;
        // both are Binomial(n, p); difference sd ≈ sqrt(2 n p)
        let p = (low + high) / (2.0 * n);
        assert!((low - high).abs() < 4.0 * libm::sqrt(2.0 * n * p), "{low} vs {high}");
    }

    #[test]
    fn analytic_gradient_matches_finite_difference() {
        let m = PreferenceModel::reference();
        let g = m.censor_threshold;
        for (theta, xi, y) in [(2.0, -1.0, g), (-4.0, 3.0, 1.0 - g), (1.0, 0.5, 0.3), (60.0, -10.0, g)] {
            let analytic = m.grad_log_likelihood(&[theta], &xi, &[y]).unwrap()[0];
            let h = 1e-5;
            let fd = (m.log_likelihood(&[theta + h], &xi, &[y]).unwrap()
                - m.log_likelihood(&[theta - h], &xi, &[y]).unwrap())
                / (2.0 * h);
            assert!((analytic - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{analytic} vs {fd}");
        }
    }
}
