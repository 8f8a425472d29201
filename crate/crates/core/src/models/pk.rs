//! One-compartment pharmacokinetic model with first-order absorption.
//!
//! θ is stored as log-parameters `(ln k_a, ln k_e, ln V)` with a Gaussian
//! prior; the constraint `k_a > k_e` is enforced by rejection when sampling.
//! Densities are those of the untruncated Gaussian on the log scale.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_sd, Batch, ExperimentModel, GaussianPrior, PriorDraws};
use crate::error::{invalid, Error, Result};
use crate::numeric::normal_log_pdf;
use crate::rng::{standard_normal, StreamRng};

const REJECTION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PKModel {
    pub prior_location: [f64; 3],
    /// Diagonal of the log-scale prior covariance.
    pub prior_cov: [f64; 3],
    pub dose: f64,
    pub multiplicative_noise_var: f64,
    pub additive_noise_var: f64,
    pub time_min: f64,
    pub time_max: f64,
    pub time_count: usize,
}

impl Default for PKModel {
    fn default() -> Self {
        Self::perturbed()
    }
}

/// Concentration `(D/V)·k_a/(k_a-k_e)·(e^{-k_e t} - e^{-k_a t})` for dose `D`.
pub fn pk_mean_response(k_a: f64, k_e: f64, volume: f64, t: f64, dose: f64) -> Result<f64> {
    if !(k_e > 0.0 && k_a > k_e && volume > 0.0 && t >= 0.0) {
        return Err(invalid(format!(
            "PK response needs k_a > k_e > 0, V > 0, t >= 0 (got k_a={k_a}, k_e={k_e}, V={volume}, t={t})"
        )));
    }
    // e^{-k_e t} - e^{-k_a t} = e^{-k_e t} (1 - e^{-(k_a-k_e) t})
    let decay = libm::exp(-k_e * t) * -libm::expm1(-(k_a - k_e) * t);
    Ok(dose / volume * k_a / (k_a - k_e) * decay)
}

impl PKModel {
    pub fn reference() -> Self {
        Self {
            prior_location: [0.0, libm::log(0.1), libm::log(20.0)],
            prior_cov: [0.05; 3],
            dose: 400.0,
            multiplicative_noise_var: 0.01,
            additive_noise_var: 0.1,
            time_min: 0.05,
            time_max: 24.0,
            time_count: 50,
        }
    }

    /// First log-coordinate shifted by 0.1, which is 0.1 nats from the reference.
    pub fn perturbed() -> Self {
        let mut m = Self::reference();
        m.prior_location[0] = 0.1;
        m
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.prior_cov {
            check_sd("PK prior variance", v)?;
        }
        check_sd("PK dose", self.dose)?;
        if self.multiplicative_noise_var < 0.0 || !(self.additive_noise_var > 0.0) {
            return Err(invalid("PK noise variances must be nonnegative with positive additive part"));
        }
        if !(self.time_min > 0.0 && self.time_min < self.time_max) || self.time_count < 2 {
            return Err(invalid("PK sampling-time grid needs 0 < min < max and at least 2 points"));
        }
        Ok(())
    }

    /// `(k_a, k_e, V)` from stored log-parameters.
    pub fn natural(theta: &[f64]) -> [f64; 3] {
        [libm::exp(theta[0]), libm::exp(theta[1]), libm::exp(theta[2])]
    }

    pub fn mean_response(&self, theta: &[f64], t: f64) -> Result<f64> {
        let [k_a, k_e, v] = Self::natural(theta);
        pk_mean_response(k_a, k_e, v, t, self.dose)
    }

    pub fn response_variance(&self, mean: f64) -> f64 {
        self.multiplicative_noise_var * mean * mean + self.additive_noise_var
    }

    fn draw_prior(&self, rng: &mut StreamRng) -> Result<[f64; 3]> {
        for _ in 0..REJECTION_CAP {
            let mut theta = [0.0; 3];
            for (k, slot) in theta.iter_mut().enumerate() {
                *slot = self.prior_location[k] + libm::sqrt(self.prior_cov[k]) * standard_normal(rng);
            }
            if self.in_support(&theta) {
                return Ok(theta);
            }
        }
        Err(Error::SamplingFailure(format!(
            "no PK prior draw with k_a > k_e after {REJECTION_CAP} attempts"
        )))
    }
}

impl ExperimentModel for PKModel {
    type Design = f64;

    fn name(&self) -> &'static str {
        "pk"
    }

    fn theta_dim(&self) -> usize {
        3
    }

    fn outcome_dim(&self, _design: &f64) -> usize {
        1
    }

    fn design_grid(&self) -> Vec<f64> {
        let (lo, hi) = (libm::log(self.time_min), libm::log(self.time_max));
        let steps = (self.time_count - 1) as f64;
        (0..self.time_count)
            .map(|i| match i {
                0 => self.time_min,
                i if i + 1 == self.time_count => self.time_max,
                i => libm::exp(lo + (hi - lo) * i as f64 / steps),
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
        (0..3)
            .map(|k| normal_log_pdf(theta[k], self.prior_location[k], libm::sqrt(self.prior_cov[k])))
            .sum()
    }

    fn sample_prior(&self, rng: &mut StreamRng, n: usize) -> Result<PriorDraws> {
        let mut thetas = Batch::with_capacity(3, n);
        let mut log_density = Vec::with_capacity(n);
        for _ in 0..n {
            let theta = self.draw_prior(rng)?;
            log_density.push(self.prior_log_density(&theta));
            thetas.push(&theta);
        }
        Ok(PriorDraws { thetas, log_density })
    }

    fn log_likelihood(&self, theta: &[f64], design: &f64, y: &[f64]) -> Result<f64> {
        let mean = self.mean_response(theta, *design)?;
        Ok(normal_log_pdf(y[0], mean, libm::sqrt(self.response_variance(mean))))
    }

    fn sample_likelihood(
        &self,
        theta: &[f64],
        design: &f64,
        rng: &mut StreamRng,
        n: usize,
    ) -> Result<Batch> {
        let mean = self.mean_response(theta, *design)?;
        let m_sd = libm::sqrt(self.multiplicative_noise_var);
        let a_sd = libm::sqrt(self.additive_noise_var);
        let mut out = Batch::with_capacity(1, n);
        for _ in 0..n {
            let y = mean * (1.0 + m_sd * standard_normal(rng)) + a_sd * standard_normal(rng);
            out.push(&[y]);
        }
        Ok(out)
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        theta[0] > theta[1]
    }

    fn gaussian_prior(&self) -> Option<GaussianPrior> {
        Some(GaussianPrior {
            mean: self.prior_location.to_vec(),
            sd: self.prior_cov.iter().map(|v| libm::sqrt(*v)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn mean_response_examples() {
        assert_eq!(pk_mean_response(1.0, 0.1, 20.0, 0.0, 400.0).unwrap(), 0.0);
        assert!(pk_mean_response(1.0, 0.1, 20.0, 1e4, 400.0).unwrap().abs() < 1e-12);
        let direct = 20.0 * (1.0 / 0.9) * (libm::exp(-0.1) - libm::exp(-1.0));
        let v = pk_mean_response(1.0, 0.1, 20.0, 1.0, 400.0).unwrap();
        assert!((v - direct).abs() < 1e-12);
        assert!((v - 11.932).abs() < 1e-3);
        assert!(pk_mean_response(0.1, 0.1, 20.0, 1.0, 400.0).is_err());
        assert!(pk_mean_response(0.05, 0.1, 20.0, 1.0, 400.0).is_err());
    }

    #[test]
    fn prior_draws_respect_constraint() {
        let m = PKModel::default();
        let draws = m.sample_prior(&mut RandomStream::new(1).rng(), 20_000).unwrap();
        for theta in draws.thetas.rows() {
            let [k_a, k_e, v] = PKModel::natural(theta);
            assert!(k_a > k_e && k_e > 0.0 && v > 0.0);
        }
    }

    #[test]
    fn impossible_constraint_fails_after_cap() {
        let mut m = PKModel::reference();
        // k_a ≈ e^{-50} can never exceed k_e ≈ 0.1
        m.prior_location[0] = -50.0;
        m.prior_cov = [1e-6; 3];
        let err = m.sample_prior(&mut RandomStream::new(1).rng(), 1).unwrap_err();
        assert!(matches!(err, Error::SamplingFailure(_)));
    }

    #[test]
    fn response_variance_moment() {
        let m = PKModel::default();
        let theta = [0.1, libm::log(0.1), libm::log(20.0)];
        let t = 2.0;
        let mu = m.mean_response(&theta, t).unwrap();
        let n = 100_000;
        let ys = m.sample_likelihood(&theta, &t, &mut RandomStream::new(8).rng(), n).unwrap();
        let mean = ys.as_flat().iter().sum::<f64>() / n as f64;
        let var = ys.as_flat().iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64;
        let expect = 0.01 * mu * mu + 0.1;
        assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
        assert!((mean - mu).abs() < 4.0 * libm::sqrt(expect / n as f64));
    }

    #[test]
    fn grid_is_log_spaced() {
        let grid = PKModel::default().design_grid();
        assert_eq!(grid.len(), 50);
        assert_eq!(grid[0], 0.05);
        assert_eq!(grid[49], 24.0);
        let ratio = grid[1] / grid[0];
        for w in grid.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
    }
}
