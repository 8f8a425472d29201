//! Experiment models: prior and likelihood samplers/densities plus design grids.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Debug;

use crate::error::Result;
use crate::rng::StreamRng;

mod ab;
mod diagnostic;
mod pk;
mod preference;

pub use ab::ABTestModel;
pub use diagnostic::{DiagnosticTestModel, TestKind, TestRates};
pub use pk::{pk_mean_response, PKModel};
pub use preference::PreferenceModel;

/// Row-major collection of equal-length vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    dim: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "flat data does not tile rows of width {dim}");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// θ draws together with their prior log-densities.
#[derive(Debug, Clone)]
pub struct PriorDraws {
    pub thetas: Batch,
    pub log_density: Vec<f64>,
}

/// Gaussian description of a prior over the (unconstrained) θ coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// A Bayesian experiment: prior `p(θ)`, likelihood `p(y|θ,ξ)` and candidate designs `ξ`.
///
/// Parameters and outcomes are flat `f64` vectors. Discrete quantities are
/// encoded as `0.0`/`1.0`, and log-densities of discrete outcomes are log
/// probabilities.
pub trait ExperimentModel: Sync {
    type Design: Clone + Debug + PartialEq + Send + Sync;

    fn name(&self) -> &'static str;
    fn theta_dim(&self) -> usize;
    fn outcome_dim(&self, design: &Self::Design) -> usize;
    fn design_grid(&self) -> Vec<Self::Design>;

    /// Text form of a design used in CSV rows.
    fn design_label(&self, design: &Self::Design) -> String;
    /// Scalar coordinate of a design used as the x-axis of figure data.
    fn design_coordinate(&self, design: &Self::Design) -> f64;

    fn prior_log_density(&self, theta: &[f64]) -> f64;
    fn sample_prior(&self, rng: &mut StreamRng, n: usize) -> Result<PriorDraws>;

    fn log_likelihood(&self, theta: &[f64], design: &Self::Design, y: &[f64]) -> Result<f64>;
    fn sample_likelihood(
        &self,
        theta: &[f64],
        design: &Self::Design,
        rng: &mut StreamRng,
        n: usize,
    ) -> Result<Batch>;

    /// Whether θ lies in the support of the prior (e.g. PK requires `k_a > k_e`).
    fn in_support(&self, _theta: &[f64]) -> bool {
        true
    }

    /// Closed-form `ln p(y|ξ)` when the model admits one.
    fn log_marginal(&self, _design: &Self::Design, _y: &[f64]) -> Option<f64> {
        None
    }

    /// Finite prior support as `(θ, probability)` pairs.
    fn enumerate_prior(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        None
    }

    /// Finite outcome support for a design.
    fn enumerate_outcomes(&self, _design: &Self::Design) -> Option<Vec<Vec<f64>>> {
        None
    }

    /// Gaussian form of the prior, used to initialise amortised proposals.
    fn gaussian_prior(&self) -> Option<GaussianPrior> {
        None
    }

    /// Summary of an outcome fed to proposals and scorer networks.
    fn features(&self, _design: &Self::Design, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    /// `∇_θ ln p(y|θ,ξ)`. The default uses central differences.
    fn grad_log_likelihood(
        &self,
        theta: &[f64],
        design: &Self::Design,
        y: &[f64],
    ) -> Result<Vec<f64>> {
        let mut grad = Vec::with_capacity(theta.len());
        let mut probe = theta.to_vec();
        for k in 0..theta.len() {
            let h = 1e-6 * (1.0 + libm::fabs(theta[k]));
            probe[k] = theta[k] + h;
            let up = self.log_likelihood(&probe, design, y)?;
            probe[k] = theta[k] - h;
            let down = self.log_likelihood(&probe, design, y)?;
            probe[k] = theta[k];
            grad.push((up - down) / (2.0 * h));
        }
        Ok(grad)
    }
}

pub(crate) fn check_sd(name: &str, sd: f64) -> Result<()> {
    if sd.is_finite() && sd > 0.0 {
        Ok(())
    } else {
        Err(crate::error::invalid(alloc::format!("{name} must be positive and finite, got {sd}")))
    }
}

/// Label for a continuous design coordinate, rounded to 1e-9 so grid
/// arithmetic noise does not leak into output and `--designs` arguments.
pub fn coordinate_label(x: f64) -> String {
    let r = libm::round(x * 1e9) / 1e9;
    alloc::format!("{}", r + 0.0)
}

#[cfg(test)]
mod label_tests {
    use super::coordinate_label;

    #[test]
    fn labels_are_short() {
        assert_eq!(coordinate_label(-76.80000000000001), "-76.8");
        assert_eq!(coordinate_label(0.05671386084476314), "0.056713861");
        assert_eq!(coordinate_label(-0.0), "0");
        assert_eq!(coordinate_label(24.0), "24");
    }
}
