//! Tanh-squashed diagonal Gaussian action head.
//!
//! The policy network emits a pre-squash mean and log standard deviation per
//! action dimension. A sample is `tanh(mu + sigma * eps)` with `eps ~ N(0, I)`;
//! its log-density carries the change-of-variables term
//! `-sum log(1 - tanh(u)^2)`.

use std::f64::consts::{LN_2, PI};

pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

pub fn clamp_log_sigma(raw: f64) -> f64 {
    raw.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHeadOutput {
    pub mu: Vec<f64>,
    /// Clamped to `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub log_sigma: Vec<f64>,
    /// `mu + sigma * eps`, before tanh.
    pub pre_tanh: Vec<f64>,
    pub sampled_action: Vec<f64>,
    pub log_prob: f64,
}

/// Draws (or, when `deterministic`, takes the mode-like `tanh(mu)`) an action
/// from the squashed Gaussian.
///
/// In deterministic mode the noise is ignored, the action is `tanh(mu)` and
/// `log_prob` is the density at that point.
pub fn gaussian_head_sample(
    mu: &[f64],
    log_sigma_raw: &[f64],
    noise: &[f64],
    deterministic: bool,
) -> GaussianHeadOutput {
    assert_eq!(mu.len(), log_sigma_raw.len(), "mu / log_sigma length");
    if !deterministic {
        assert_eq!(mu.len(), noise.len(), "noise length must match action dim");
    }
    let n = mu.len();
    let mut out = GaussianHeadOutput {
        mu: mu.to_vec(),
        log_sigma: Vec::with_capacity(n),
        pre_tanh: Vec::with_capacity(n),
        sampled_action: Vec::with_capacity(n),
        log_prob: 0.0,
    };
    for j in 0..n {
        let ls = clamp_log_sigma(log_sigma_raw[j]);
        let eps = if deterministic { 0.0 } else { noise[j] };
        let u = mu[j] + ls.exp() * eps;
        out.log_prob += -0.5 * eps * eps - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        out.log_sigma.push(ls);
        out.pre_tanh.push(u);
        out.sampled_action.push(tanh_open(u));
    }
    out
}

/// `tanh` pulled back from the endpoints so actions stay strictly inside (-1, 1).
pub fn tanh_open(u: f64) -> f64 {
    const LIMIT: f64 = 1.0 - f64::EPSILON;
    u.tanh().clamp(-LIMIT, LIMIT)
}

/// Log-density of a 1-D squashed Gaussian at action `a` in (-1, 1).
pub fn squashed_log_density(a: f64, mu: f64, log_sigma: f64) -> f64 {
    let ls = clamp_log_sigma(log_sigma);
    let sigma = ls.exp();
    let u = a.atanh();
    let z = (u - mu) / sigma;
    -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln() - (1.0 - a * a).ln()
}
