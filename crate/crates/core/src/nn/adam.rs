use ndarray::Zip;

use super::mlp::Mlp;
use crate::error::{config, Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Mlp,
    pub second_moment: Mlp,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &Mlp) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    /// Zeroes the moments and the step counter, keeping the constants.
    pub fn reset(&mut self) {
        self.first_moment = self.first_moment.zeros_like();
        self.second_moment = self.second_moment.zeros_like();
        self.step_count = 0;
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut Mlp, grads: &Mlp, state: &mut AdamState, lr: f64) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) {
        return config(format!(
            "adam shapes differ: params {:?}, grads {:?}, moments {:?}",
            params.sizes(),
            grads.sizes(),
            state.first_moment.sizes()
        ));
    }
    for (k, g) in grads.layers().iter().enumerate() {
        if !g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in layer {k}")));
        }
    }
    let t = state.step_count + 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let m_layers = state.first_moment.layers_mut();
    let v_layers = state.second_moment.layers_mut();
    for (((p, g), m), v) in params
        .layers_mut()
        .iter_mut()
        .zip(grads.layers())
        .zip(m_layers.iter_mut())
        .zip(v_layers.iter_mut())
    {
        let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    state.step_count = t;
    Ok(())
}
