//! Two blood tests for a binary condition.
//!
//! θ = `[1.0]` means the patient has the condition, `[0.0]` that they do not.
//! y = `[1.0]` is a positive test result, `[0.0]` a negative one.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{Batch, ExperimentModel, PriorDraws};
use crate::error::{invalid, Result};
use crate::rng::{uniform, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    A,
    B,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestKind::A => f.write_str("A"),
            TestKind::B => f.write_str("B"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRates {
    pub false_negative: f64,
    pub false_positive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticTestModel {
    pub prior_prob: f64,
    pub test_a: TestRates,
    pub test_b: TestRates,
}

impl Default for DiagnosticTestModel {
    fn default() -> Self {
        Self {
            prior_prob: 0.5,
            // "10^-14 %" as a fraction
            test_a: TestRates { false_negative: 1e-16, false_positive: 0.5 },
            test_b: TestRates { false_negative: 0.184, false_positive: 0.184 },
        }
    }
}

const SICK: usize = 0;
const HEALTHY: usize = 1;
const POS: usize = 0;
const NEG: usize = 1;

impl DiagnosticTestModel {
    pub fn with_prior(prior_prob: f64) -> Result<Self> {
        let m = Self { prior_prob, ..Self::default() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let rates = [self.test_a, self.test_b];
        if !unit(self.prior_prob)
            || rates.iter().any(|r| !unit(r.false_negative) || !unit(r.false_positive))
        {
            return Err(invalid("diagnostic probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn rates(&self, test: TestKind) -> TestRates {
        match test {
            TestKind::A => self.test_a,
            TestKind::B => self.test_b,
        }
    }

    /// `table[θ][y] = P(y|θ)` with rows (sick, healthy) and columns (positive, negative).
    pub fn likelihood_table(&self, test: TestKind) -> [[f64; 2]; 2] {
        let r = self.rates(test);
        [
            [1.0 - r.false_negative, r.false_negative],
            [r.false_positive, 1.0 - r.false_positive],
        ]
    }

    /// Outcome distribution `(P(pos), P(neg))` under prior probability `prior_prob`.
    pub fn marginal(&self, test: TestKind, prior_prob: f64) -> [f64; 2] {
        let t = self.likelihood_table(test);
        let w = [prior_prob, 1.0 - prior_prob];
        [
            w[SICK] * t[SICK][POS] + w[HEALTHY] * t[HEALTHY][POS],
            w[SICK] * t[SICK][NEG] + w[HEALTHY] * t[HEALTHY][NEG],
        ]
    }
}

fn theta_index(theta: &[f64]) -> Result<usize> {
    match theta {
        [t] if *t == 1.0 => Ok(SICK),
        [t] if *t == 0.0 => Ok(HEALTHY),
        _ => Err(invalid(format!("diagnostic θ must be [0] or [1], got {theta:?}"))),
    }
}

fn outcome_index(y: &[f64]) -> Result<usize> {
    match y {
        [v] if *v == 1.0 => Ok(POS),
        [v] if *v == 0.0 => Ok(NEG),
        _ => Err(invalid(format!("diagnostic outcome must be [0] or [1], got {y:?}"))),
    }
}

impl ExperimentModel for DiagnosticTestModel {
    type Design = TestKind;

    fn name(&self) -> &'static str {
        "diagnostic"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn outcome_dim(&self, _design: &TestKind) -> usize {
        1
    }

    fn design_grid(&self) -> Vec<TestKind> {
        vec![TestKind::A, TestKind::B]
    }

    fn design_label(&self, design: &TestKind) -> String {
        format!("{design}")
    }

    fn design_coordinate(&self, design: &TestKind) -> f64 {
        match design {
            TestKind::A => 0.0,
            TestKind::B => 1.0,
        }
    }

    fn prior_log_density(&self, theta: &[f64]) -> f64 {
        match theta_index(theta) {
            Ok(SICK) => libm::log(self.prior_prob),
            Ok(_) => libm::log(1.0 - self.prior_prob),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn sample_prior(&self, rng: &mut StreamRng, n: usize) -> Result<PriorDraws> {
        let mut thetas = Batch::with_capacity(1, n);
        let mut log_density = Vec::with_capacity(n);
        for _ in 0..n {
            let theta = if uniform(rng) < self.prior_prob { 1.0 } else { 0.0 };
            thetas.push(&[theta]);
            log_density.push(self.prior_log_density(&[theta]));
        }
        Ok(PriorDraws { thetas, log_density })
    }

    fn log_likelihood(&self, theta: &[f64], design: &TestKind, y: &[f64]) -> Result<f64> {
        let table = self.likelihood_table(*design);
        Ok(libm::log(table[theta_index(theta)?][outcome_index(y)?]))
    }

    fn sample_likelihood(
        &self,
        theta: &[f64],
        design: &TestKind,
        rng: &mut StreamRng,
        n: usize,
    ) -> Result<Batch> {
        let p_pos = self.likelihood_table(*design)[theta_index(theta)?][POS];
        let mut out = Batch::with_capacity(1, n);
        for _ in 0..n {
            out.push(&[if uniform(rng) < p_pos { 1.0 } else { 0.0 }]);
        }
        Ok(out)
    }

    fn log_marginal(&self, design: &TestKind, y: &[f64]) -> Option<f64> {
        let idx = outcome_index(y).ok()?;
        Some(libm::log(self.marginal(*design, self.prior_prob)[idx]))
    }

    fn enumerate_prior(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        Some(vec![(vec![1.0], self.prior_prob), (vec![0.0], 1.0 - self.prior_prob)])
    }

    fn enumerate_outcomes(&self, _design: &TestKind) -> Option<Vec<Vec<f64>>> {
        Some(vec![vec![1.0], vec![0.0]])
    }
}
