#![allow(dead_code)]

use reig_core::models::{Batch, ExperimentModel, GaussianPrior, PriorDraws};
use reig_core::numeric::normal_log_pdf;
use reig_core::rng::{standard_normal, StreamRng};
use reig_core::Result;

/// θ ~ N(0,1), y ~ N(0,1) independent of θ: every EIG is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseOnly;

impl ExperimentModel for NoiseOnly {
    type Design = usize;

    fn name(&self) -> &'static str {
        "noise-only"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn outcome_dim(&self, _: &usize) -> usize {
        1
    }
    fn design_grid(&self) -> Vec<usize> {
        vec![0]
    }
    fn design_label(&self, d: &usize) -> String {
        d.to_string()
    }
    fn design_coordinate(&self, d: &usize) -> f64 {
        *d as f64
    }
    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        normal_log_pdf(theta[0], 0.0, 1.0)
    }
    fn sample_prior(&self, rng: &mut StreamRng, n: usize) -> Result<PriorDraws> {
        let mut thetas = Batch::with_capacity(1, n);
        let mut log_density = Vec::with_capacity(n);
        for _ in 0..n {
            let t = standard_normal(rng);
            log_density.push(self.prior_log_density(&[t]));
            thetas.push(&[t]);
        }
        Ok(PriorDraws { thetas, log_density })
    }
    fn log_likelihood(&self, _theta: &[f64], _: &usize, y: &[f64]) -> Result<f64> {
        Ok(normal_log_pdf(y[0], 0.0, 1.0))
    }
    fn sample_likelihood(&self, _theta: &[f64], _: &usize, rng: &mut StreamRng, n: usize) -> Result<Batch> {
        let mut ys = Batch::with_capacity(1, n);
        for _ in 0..n {
            ys.push(&[standard_normal(rng)]);
        }
        Ok(ys)
    }
    fn log_marginal(&self, _: &usize, y: &[f64]) -> Option<f64> {
        Some(normal_log_pdf(y[0], 0.0, 1.0))
    }
    fn gaussian_prior(&self) -> Option<GaussianPrior> {
        Some(GaussianPrior { mean: vec![0.0], sd: vec![1.0] })
    }
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Upper 1% point of Student's t with 49 degrees of freedom.
pub const T_99_49: f64 = 2.4049;
