//! First-order update rules used by the trainable proposal and scorer.

use alloc::vec;
use alloc::vec::Vec;

/// Adam with bias correction. `step` is applied as an ascent or descent
/// direction by the caller through the sign of the gradient it passes in.
#[derive(Debug, Clone)]
pub struct Adam {
    step: f64,
    beta1: f64,
    beta2: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, step: f64) -> Self {
        Self { step, beta1: 0.9, beta2: 0.999, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn set_step(&mut self, step: f64) {
        self.step = step;
    }

    /// Descent update `params -= step · m̂ / (√v̂ + 1e-8)`.
    pub fn descend(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.step * mh / (libm::sqrt(vh) + 1e-8);
        }
    }
}

/// Heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Momentum {
    step: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(len: usize, step: f64, momentum: f64) -> Self {
        Self { step, momentum, velocity: vec![0.0; len] }
    }

    /// Ascent update `v ← μ v + step · g; params += v`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        for i in 0..params.len() {
            self.velocity[i] = self.momentum * self.velocity[i] + self.step * grad[i];
            params[i] += self.velocity[i];
        }
    }
}
