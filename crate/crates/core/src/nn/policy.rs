use ndarray::{s, Array2, ArrayView2, Zip};
use rand::Rng;

use super::gaussian::{LOG_SIGMA_MAX, LOG_SIGMA_MIN};
use super::mlp::{Mlp, MlpCache};
use crate::error::{config, Result};

/// Policy network whose output row is `[mu (action_dim), log_sigma (action_dim)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    action_dim: usize,
}

/// Batched head parameters produced by [`Policy::forward`].
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub mu: Array2<f64>,
    /// Clamped log standard deviations.
    pub log_sigma: Array2<f64>,
    /// True where the raw log sigma fell outside the clamp (zero gradient there).
    pub clamped: Array2<bool>,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Ok(Self {
            net: Mlp::new(&sizes, rng)?,
            action_dim,
        })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        let out = net.output_dim();
        if out % 2 != 0 {
            return config(format!("policy output width {out} is not 2 x action_dim"));
        }
        Ok(Self {
            net,
            action_dim: out / 2,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn forward(&self, states: ArrayView2<f64>) -> Result<(PolicyOutput, MlpCache)> {
        let (out, cache) = self.net.forward(states)?;
        Ok((self.split(out), cache))
    }

    pub fn predict(&self, states: ArrayView2<f64>) -> Result<PolicyOutput> {
        Ok(self.split(self.net.predict(states)?))
    }

    fn split(&self, out: Array2<f64>) -> PolicyOutput {
        let d = self.action_dim;
        let mu = out.slice(s![.., ..d]).to_owned();
        let raw = out.slice(s![.., d..]);
        let clamped = raw.mapv(|v| !(LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&v));
        let log_sigma = raw.mapv(|v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX));
        PolicyOutput {
            mu,
            log_sigma,
            clamped,
        }
    }

    /// Parameter gradients given loss gradients w.r.t. `mu` and the clamped
    /// `log_sigma`. Clamped entries pass no gradient.
    pub fn backward(
        &self,
        out: &PolicyOutput,
        cache: &MlpCache,
        grad_mu: ArrayView2<f64>,
        grad_log_sigma: ArrayView2<f64>,
    ) -> Result<Mlp> {
        let d = self.action_dim;
        let n = grad_mu.nrows();
        let mut g = Array2::zeros((n, 2 * d));
        g.slice_mut(s![.., ..d]).assign(&grad_mu);
        let mut gls = grad_log_sigma.to_owned();
        Zip::from(&mut gls).and(&out.clamped).for_each(|v, &c| {
            if c {
                *v = 0.0;
            }
        });
        g.slice_mut(s![.., d..]).assign(&gls);
        Ok(self.net.backward(cache, g.view())?.0)
    }
}
