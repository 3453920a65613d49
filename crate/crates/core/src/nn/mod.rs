//! Numeric substrate: MLPs, Adam, the squashed Gaussian head and Polyak averaging.

mod adam;
mod gaussian;
mod mlp;
mod policy;
mod polyak;

pub use adam::{adam_step, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS};
pub use gaussian::{
    clamp_log_sigma, gaussian_head_sample, log_one_minus_tanh_sq, softplus, squashed_log_density,
    tanh_open, GaussianHeadOutput, LOG_SIGMA_MAX, LOG_SIGMA_MIN,
};
pub use mlp::{Dense, Mlp, MlpCache};
pub use policy::{Policy, PolicyOutput};
pub use polyak::polyak_update;
