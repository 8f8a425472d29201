//! Neural lower bound: `E_joint[T] − E_marginals[exp(T − 1)]` with a
//! two-hidden-layer tanh scorer trained by explicit backpropagation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DivergenceSamples, EstimatorConfig};
use crate::error::{invalid, Error, Result};
use crate::models::{Batch, ExperimentModel};
use crate::optim::Momentum;
use crate::rng::{standard_normal, RandomStream};

/// Feed-forward `T(θ, y)`: standardise, tanh, tanh, linear.
///
/// Parameters live in one flat vector laid out as `W1 | b1 | W2 | b2 | w3 | b3`
/// with row-major weight matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerNetwork {
    pub input_dim: usize,
    pub hidden: usize,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
struct Trace {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl ScorerNetwork {
    pub const DEFAULT_HIDDEN: usize = 64;

    fn param_count(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + hidden + hidden * hidden + hidden + hidden + 1
    }

    /// The constant scorer `T ≡ c`.
    pub fn constant(input_dim: usize, c: f64) -> Self {
        let hidden = Self::DEFAULT_HIDDEN;
        let mut params = vec![0.0; Self::param_count(input_dim, hidden)];
        *params.last_mut().unwrap() = c;
        Self { input_dim, hidden, input_shift: vec![0.0; input_dim], input_scale: vec![1.0; input_dim], params }
    }

    pub fn zeros(input_dim: usize) -> Self {
        Self::constant(input_dim, 0.0)
    }

    /// Weights drawn `N(0, 1/fan_in)`, biases zero.
    pub fn random(input_dim: usize, hidden: usize, stream: RandomStream) -> Self {
        let mut rng = stream.rng();
        let mut net = Self {
            input_dim,
            hidden,
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            params: vec![0.0; Self::param_count(input_dim, hidden)],
        };
        let (w1, _, w2, _, w3, _) = net.offsets();
        let scale1 = 1.0 / libm::sqrt(input_dim as f64);
        let scale2 = 1.0 / libm::sqrt(hidden as f64);
        for i in 0..hidden * input_dim {
            net.params[w1 + i] = scale1 * standard_normal(&mut rng);
        }
        for i in 0..hidden * hidden {
            net.params[w2 + i] = scale2 * standard_normal(&mut rng);
        }
        for i in 0..hidden {
            net.params[w3 + i] = scale2 * standard_normal(&mut rng);
        }
        net
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != Self::param_count(self.input_dim, self.hidden)
            || self.input_shift.len() != self.input_dim
            || self.input_scale.len() != self.input_dim
        {
            return Err(invalid("scorer parameter dimensions are inconsistent"));
        }
        if self.params.iter().chain(&self.input_shift).any(|v| !v.is_finite())
            || self.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(invalid("scorer parameters must be finite with positive input scales"));
        }
        Ok(())
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize, usize) {
        let (h, d) = (self.hidden, self.input_dim);
        let w1 = 0;
        let b1 = w1 + h * d;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + h;
        (w1, b1, w2, b2, w3, b3)
    }

    /// Set the input standardisation from a sample of inputs.
    pub fn fit_standardisation(&mut self, inputs: &Batch) {
        let n = inputs.len().max(1) as f64;
        for k in 0..self.input_dim {
            let mean = inputs.rows().map(|r| r[k]).sum::<f64>() / n;
            let var = inputs.rows().map(|r| (r[k] - mean) * (r[k] - mean)).sum::<f64>() / n;
            self.input_shift[k] = mean;
            self.input_scale[k] = if var > 1e-24 { libm::sqrt(var) } else { 1.0 };
        }
    }

    fn forward_trace(&self, input: &[f64]) -> (f64, Trace) {
        let (w1, b1, w2, b2, w3, b3) = self.offsets();
        let (h, d) = (self.hidden, self.input_dim);
        let p = &self.params;
        let x: Vec<f64> = (0..d).map(|k| (input[k] - self.input_shift[k]) / self.input_scale[k]).collect();
        let h1: Vec<f64> = (0..h)
            .map(|r| {
                let row = &p[w1 + r * d..w1 + (r + 1) * d];
                libm::tanh(p[b1 + r] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect();
        let h2: Vec<f64> = (0..h)
            .map(|r| {
                let row = &p[w2 + r * h..w2 + (r + 1) * h];
                libm::tanh(p[b2 + r] + row.iter().zip(&h1).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect();
        let out = p[b3] + p[w3..w3 + h].iter().zip(&h2).map(|(a, b)| a * b).sum::<f64>();
        (out, Trace { x, h1, h2 })
    }

    /// `T` at a concatenated `[θ, features(y)]` input.
    pub fn forward(&self, input: &[f64]) -> f64 {
        self.forward_trace(input).0
    }

    /// Accumulate `upstream · ∂T/∂params` into `grad`.
    fn backward(&self, trace: &Trace, upstream: f64, grad: &mut [f64]) {
        let (w1, b1, w2, b2, w3, b3) = self.offsets();
        let (h, d) = (self.hidden, self.input_dim);
        let p = &self.params;
        grad[b3] += upstream;
        let mut delta2 = vec![0.0; h];
        for r in 0..h {
            grad[w3 + r] += upstream * trace.h2[r];
            delta2[r] = upstream * p[w3 + r] * (1.0 - trace.h2[r] * trace.h2[r]);
        }
        let mut delta1 = vec![0.0; h];
        for r in 0..h {
            let dr = delta2[r];
            grad[b2 + r] += dr;
            let row = w2 + r * h;
            for c in 0..h {
                grad[row + c] += dr * trace.h1[c];
                delta1[c] += dr * p[row + c];
            }
        }
        for r in 0..h {
            let dr = delta1[r] * (1.0 - trace.h1[r] * trace.h1[r]);
            grad[b1 + r] += dr;
            let row = w1 + r * d;
            for c in 0..d {
                grad[row + c] += dr * trace.x[c];
            }
        }
    }

    /// Objective `mean T(joint) − mean exp(T(shuffled) − 1)` over paired rows
    /// of two input batches, and its parameter gradient.
    pub fn objective_and_gradient(&self, joint: &Batch, shuffled: &Batch) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let nj = joint.len() as f64;
        let ns = shuffled.len() as f64;
        let mut value = 0.0;
        for row in joint.rows() {
            let (t, trace) = self.forward_trace(row);
            value += t / nj;
            self.backward(&trace, 1.0 / nj, &mut grad);
        }
        for row in shuffled.rows() {
            let (t, trace) = self.forward_trace(row);
            let e = libm::exp(t - 1.0);
            value -= e / ns;
            self.backward(&trace, -e / ns, &mut grad);
        }
        (value, grad)
    }

    pub fn objective(&self, joint: &Batch, shuffled: &Batch) -> f64 {
        let a = joint.rows().map(|r| self.forward(r)).sum::<f64>() / joint.len() as f64;
        let b = shuffled.rows().map(|r| libm::exp(self.forward(r) - 1.0)).sum::<f64>() / shuffled.len() as f64;
        a - b
    }
}

fn concat(theta: &[f64], features: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(theta.len() + features.len());
    v.extend_from_slice(theta);
    v.extend_from_slice(features);
    v
}

/// Per-θ contributions `mean_j [T(θᵢ,yᵢⱼ) − exp(T(θᵢ,yᵢⱼ*) − 1)]`.
///
/// The shuffled partner of `yᵢⱼ` is `y₍ᵢ₊₁ mod N1₎ⱼ`, i.e. the flattened `y`
/// batch cyclically shifted by one θ-group, so partners always come from a
/// different θ. With `N1 = 1` the shift is by one outcome instead.
pub fn mine_divergences<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    net: &ScorerNetwork,
    cfg: &EstimatorConfig,
) -> Result<DivergenceSamples> {
    cfg.validate()?;
    net.validate()?;
    let root = cfg.root_stream();
    let mut thetas = Vec::with_capacity(cfg.n1);
    let mut features = Vec::with_capacity(cfg.n1);
    for i in 0..cfg.n1 {
        let mut rng = root.substream(i as u64).rng();
        let theta = model.sample_prior(&mut rng, 1)?.thetas.row(0).to_vec();
        let ys = model.sample_likelihood(&theta, design, &mut rng, cfg.n2)?;
        features.push(ys.rows().map(|y| model.features(design, y)).collect::<Vec<_>>());
        thetas.push(theta);
    }
    let width = thetas[0].len() + features[0][0].len();
    if width != net.input_dim {
        return Err(invalid(format!("scorer expects {} inputs, model provides {width}", net.input_dim)));
    }
    let mut d = Vec::with_capacity(cfg.n1);
    let mut joint = Vec::with_capacity(cfg.n1 * cfg.n2);
    for i in 0..cfg.n1 {
        let start = joint.len();
        for j in 0..cfg.n2 {
            let partner = if cfg.n1 > 1 { &features[(i + 1) % cfg.n1][j] } else { &features[0][(j + 1) % cfg.n2] };
            let t = net.forward(&concat(&thetas[i], &features[i][j]));
            let t_star = net.forward(&concat(&thetas[i], partner));
            let z = t - libm::exp(t_star - 1.0);
            joint.push(z);
        }
        d.push(crate::numeric::mean(&joint[start..]));
    }
    if joint.iter().any(|z| !z.is_finite()) {
        return Err(Error::EstimatorFailure { message: "scorer produced non-finite output".into(), clip_count: 0 });
    }
    Ok(DivergenceSamples { d, weights: None, joint, joint_weights: None, clip_count: 0 })
}

/// Mean of [`mine_divergences`]; a lower bound on EIG in expectation for any scorer.
pub fn mine_eig<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    net: &ScorerNetwork,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    Ok(mine_divergences(model, design, net, cfg)?.mean())
}

/// Settings for [`train_scorer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerTraining {
    pub epochs: usize,
    pub batch: usize,
    pub step: f64,
    pub momentum: f64,
    pub hidden: usize,
    /// Joint samples in the fixed training set.
    pub train_size: usize,
    pub holdout_size: usize,
    pub seed: u64,
}

impl Default for ScorerTraining {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch: 256,
            step: 1e-3,
            momentum: 0.9,
            hidden: ScorerNetwork::DEFAULT_HIDDEN,
            train_size: 10_000,
            holdout_size: 2_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedScorer {
    pub network: ScorerNetwork,
    /// Held-out objective after each epoch; entry 0 is the initial network.
    pub history: Vec<f64>,
    pub best_epoch: usize,
}

/// Independent (θ, features(y)) pairs, one outcome per θ.
fn scorer_inputs<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    stream: RandomStream,
    n: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut rng = stream.rng();
    let draws = model.sample_prior(&mut rng, n)?;
    let mut thetas = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n);
    for theta in draws.thetas.rows() {
        let y = model.sample_likelihood(theta, design, &mut rng, 1)?;
        feats.push(model.features(design, y.row(0)));
        thetas.push(theta.to_vec());
    }
    Ok((thetas, feats))
}

/// Joint rows for `order` and shuffled rows pairing each θ with the
/// features of the next index in `order` (cyclic shift by one).
fn paired_batches(thetas: &[Vec<f64>], feats: &[Vec<f64>], order: &[usize], width: usize) -> (Batch, Batch) {
    let mut joint = Batch::with_capacity(width, order.len());
    let mut shuffled = Batch::with_capacity(width, order.len());
    for (pos, &i) in order.iter().enumerate() {
        let partner = order[(pos + 1) % order.len()];
        joint.push(&concat(&thetas[i], &feats[i]));
        shuffled.push(&concat(&thetas[i], &feats[partner]));
    }
    (joint, shuffled)
}

/// Gradient ascent with momentum on the bound over a fixed training set,
/// keeping the checkpoint with the best held-out objective (epoch 0 included).
pub fn train_scorer<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    settings: &ScorerTraining,
) -> Result<TrainedScorer> {
    if settings.epochs == 0 || settings.batch < 2 || settings.train_size < 2 || settings.holdout_size < 2 {
        return Err(invalid("scorer training needs epochs >= 1 and batch/train/holdout sizes >= 2"));
    }
    let root = RandomStream::new(settings.seed);
    let (train_t, train_f) = scorer_inputs(model, design, root.substream(0), settings.train_size)?;
    let (hold_t, hold_f) = scorer_inputs(model, design, root.substream(1), settings.holdout_size)?;
    let width = train_t[0].len() + train_f[0].len();

    let mut net = ScorerNetwork::random(width, settings.hidden, root.substream(2));
    let all: Vec<usize> = (0..settings.train_size).collect();
    net.fit_standardisation(&paired_batches(&train_t, &train_f, &all, width).0);

    let hold_order: Vec<usize> = (0..settings.holdout_size).collect();
    let (hold_joint, hold_shuffled) = paired_batches(&hold_t, &hold_f, &hold_order, width);
    let mut history = vec![net.objective(&hold_joint, &hold_shuffled)];
    let mut best = (history[0], net.clone(), 0);

    let mut opt = Momentum::new(net.params.len(), settings.step, settings.momentum);
    let mut order = all;
    let mut rng = root.substream(3).rng();
    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch).filter(|c| c.len() >= 2) {
            let (joint, shuffled) = paired_batches(&train_t, &train_f, chunk, width);
            let (value, grad) = net.objective_and_gradient(&joint, &shuffled);
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingFailure { epoch, message: format!("objective diverged to {value}") });
            }
            opt.ascend(&mut net.params, &grad);
        }
        let held = net.objective(&hold_joint, &hold_shuffled);
        if !held.is_finite() {
            return Err(Error::TrainingFailure { epoch, message: format!("held-out objective is {held}") });
        }
        history.push(held);
        if held > best.0 {
            best = (held, net.clone(), epoch);
        }
    }
    Ok(TrainedScorer { network: best.1, history, best_epoch: best.2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ABTestModel;

    #[test]
    fn constant_scorers() {
        let m = ABTestModel::perturbed();
        let cfg = EstimatorConfig { n1: 5, n2: 3, m: 1, seed: 1 };
        let zero = mine_eig(&m, &4, &ScorerNetwork::zeros(12), &cfg).unwrap();
        assert_eq!(zero, -libm::exp(-1.0));
        let one = mine_eig(&m, &4, &ScorerNetwork::constant(12, 1.0), &cfg).unwrap();
        assert_eq!(one, 0.0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut net = ScorerNetwork::random(3, 8, RandomStream::new(4));
        net.input_shift = vec![0.1, -0.2, 0.3];
        net.input_scale = vec![1.5, 0.7, 2.0];
        let mut rng = RandomStream::new(5).rng();
        let mut joint = Batch::new(3);
        let mut shuffled = Batch::new(3);
        for _ in 0..6 {
            joint.push(&[standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng)]);
            shuffled.push(&[standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng)]);
        }
        let (_, grad) = net.objective_and_gradient(&joint, &shuffled);
        let h = 1e-5;
        for k in (0..net.params.len()).step_by(7) {
            let mut up = net.clone();
            up.params[k] += h;
            let mut dn = net.clone();
            dn.params[k] -= h;
            let fd = (up.objective(&joint, &shuffled) - dn.objective(&joint, &shuffled)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 + 1e-4 * fd.abs(), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn checkpoint_never_worse_than_start() {
        let m = ABTestModel::perturbed();
        let s = ScorerTraining { epochs: 3, batch: 32, train_size: 128, holdout_size: 64, hidden: 8, ..Default::default() };
        let t = train_scorer(&m, &3, &s).unwrap();
        assert_eq!(t.history.len(), 4);
        assert!(t.history[t.best_epoch] >= t.history[0]);
    }
}
