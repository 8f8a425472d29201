//! Log-domain reductions and scalar special functions.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, SQRT_2};

use crate::error::{invalid, Result};

/// `ln(2π) / 2`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Summands of a log-domain average. Entries may be `-inf` but never NaN or `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightVector(Vec<f64>);

impl LogWeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_log_weights(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn log_mean_exp(&self) -> f64 {
        lme_unchecked(&self.0)
    }
}

fn check_log_weights(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid("log weight vector is empty"));
    }
    if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(invalid("log weight vector contains NaN or +inf"));
    }
    Ok(())
}

/// `ln((1/N) Σ exp(vᵢ))`, evaluated with a max shift so finite inputs never overflow.
/// Returns `-inf` exactly when every entry is `-inf`.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    check_log_weights(values)?;
    Ok(lme_unchecked(values))
}

/// `ln Σ exp(vᵢ)` with the same guarantees as [`log_mean_exp`].
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    check_log_weights(values)?;
    Ok(lse_unchecked(values))
}

pub(crate) fn lse_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

pub(crate) fn lme_unchecked(values: &[f64]) -> f64 {
    lse_unchecked(values) - libm::log(values.len() as f64)
}

/// Standard normal log-density.
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - libm::log(sd) - HALF_LN_2PI
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, accurate deep into the lower tail where `Φ` underflows.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        libm::log1p(-0.5 * libm::erfc(x / SQRT_2))
    } else if x > -30.0 {
        libm::log(0.5 * libm::erfc(-x / SQRT_2))
    } else {
        // asymptotic series of the Mills ratio
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        -0.5 * x2 - libm::log(-x) - HALF_LN_2PI + libm::log(series)
    }
}

/// `φ(x)/Φ(x)`, the derivative of `ln Φ`.
pub fn inverse_mills(x: f64) -> f64 {
    libm::exp(-0.5 * x * x - HALF_LN_2PI - log_normal_cdf(x))
}

pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * libm::log(q) } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// `ln 2`, re-exported for callers comparing against channel capacities.
pub const LN2: f64 = LN_2;

/// Mean shifted by the first value: exact for constant inputs and less
/// exposed to cancellation when the values sit far from zero.
pub(crate) fn mean(values: &[f64]) -> f64 {
    let Some(&x0) = values.first() else { return f64::NAN };
    x0 + values.iter().map(|v| v - x0).sum::<f64>() / values.len() as f64
}
