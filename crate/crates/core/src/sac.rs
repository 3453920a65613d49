//! Soft actor-critic with an explicit state-value network and its Polyak target.
//!
//! Losses (batch means):
//!
//! - value: `½ (V(s) - [min_i Q_i(s, ã) - α log π(ã|s)])²`, `ã ~ π` fresh;
//! - critics: `½ (Q_i(s, a) - [r + γ (1 - terminal) V_targ(s')])²`;
//! - actor: `α log π(ã|s) - min_i Q_i(s, ã) + l2 ‖mu(s)‖²`, `ã` reparameterized.
//!
//! Every target is treated as a constant; gradients only reach the network
//! named by the loss.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::{Action, Observation, Transition, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, gaussian_head_sample, log_one_minus_tanh_sq, polyak_update, tanh_open, AdamState,
    Mlp, Policy, PolicyOutput,
};
use crate::rng::SeedTree;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// How the critic's bootstrap target is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QTargetMode {
    /// `r + γ (1 - terminal) V_targ(s')`.
    ValueTarget,
    /// `r + γ (1 - terminal) [min_i Q_i(s', a') - α log π(a'|s')]`, `a' ~ π`,
    /// with the current critics held constant.
    SoftQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacHyperparams {
    pub gamma: f64,
    pub lr_value: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    pub tau: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub random_action_prob: f64,
    pub gaussian_noise_scale: f64,
    /// Symmetric bound applied to network inputs after observation clipping.
    pub normalized_clip: f64,
    pub obs_clip: f64,
    pub action_l2_coef: f64,
    /// Hidden widths shared by every network.
    pub hidden: Vec<usize>,
    /// Environment steps of uniform random actions (and no updates) at the start of a fresh scope.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub q_target_mode: QTargetMode,
    /// Treat time-limit episode ends as terminal in the bootstrap.
    pub timeout_terminal: bool,
    pub buffer_capacity: usize,
    pub elite_capacity: usize,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub batches_per_cycle: usize,
    pub test_rollouts: usize,
}

impl Default for SacHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            lr_value: 1e-3,
            lr_q: 1e-3,
            lr_policy: 1e-3,
            tau: 0.005,
            alpha: 0.2,
            batch_size: 256,
            random_action_prob: 0.3,
            gaussian_noise_scale: 0.2,
            normalized_clip: 5.0,
            obs_clip: 200.0,
            action_l2_coef: 1.0,
            hidden: vec![256, 256, 256],
            warmup_steps: 1000,
            updates_per_step: 1,
            q_target_mode: QTargetMode::ValueTarget,
            timeout_terminal: false,
            buffer_capacity: crate::replay::DEFAULT_CAPACITY,
            elite_capacity: crate::replay::DEFAULT_ELITE_CAPACITY,
            epochs: 100,
            cycles_per_epoch: 50,
            batches_per_cycle: 40,
            test_rollouts: 10,
        }
    }
}

impl SacHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        for (name, lr) in [
            ("lr_value", self.lr_value),
            ("lr_q", self.lr_q),
            ("lr_policy", self.lr_policy),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1]", self.tau));
        }
        if !(0.0..=1.0).contains(&self.random_action_prob) {
            return bad("random_action_prob outside [0, 1]".into());
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !(nonneg(self.alpha) && nonneg(self.action_l2_coef) && nonneg(self.gaussian_noise_scale))
        {
            return bad(
                "alpha, action_l2_coef and gaussian_noise_scale must be finite and nonnegative"
                    .into(),
            );
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return bad("batch_size and hidden widths must be positive".into());
        }
        if !(self.obs_clip > 0.0 && self.normalized_clip > 0.0) {
            return bad("clipping bounds must be positive".into());
        }
        if self.buffer_capacity == 0 || self.elite_capacity == 0 {
            return bad("buffer capacities must be positive".into());
        }
        Ok(())
    }

    fn preprocess(&self, v: f64) -> f64 {
        v.clamp(-self.obs_clip, self.obs_clip)
            .clamp(-self.normalized_clip, self.normalized_clip)
    }

    pub fn preprocess_obs(&self, obs: &Observation) -> [f64; OBS_DIM] {
        obs.0.map(|v| self.preprocess(v))
    }
}

/// Networks and optimizer state of one SAC learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub policy: Policy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub value: Mlp,
    pub value_target: Mlp,
    pub policy_opt: AdamState,
    pub q1_opt: AdamState,
    pub q2_opt: AdamState,
    pub value_opt: AdamState,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

pub fn init_policy(hidden: &[usize], seeds: &SeedTree) -> Result<Policy> {
    Policy::new(
        OBS_DIM,
        hidden,
        ACTION_DIM,
        &mut seeds.stream("init/policy"),
    )
}

impl AgentParams {
    /// Fresh networks, each initialized from its own labelled stream.
    pub fn new(hidden: &[usize], seeds: &SeedTree) -> Result<Self> {
        Self::with_policy(init_policy(hidden, seeds)?, hidden, seeds)
    }

    /// Fresh critic around an existing policy (policy optimizer state reset).
    pub fn with_policy(policy: Policy, hidden: &[usize], seeds: &SeedTree) -> Result<Self> {
        let q_sizes = sizes(OBS_DIM + ACTION_DIM, hidden, 1);
        let q1 = Mlp::new(&q_sizes, &mut seeds.stream("init/q1"))?;
        let q2 = Mlp::new(&q_sizes, &mut seeds.stream("init/q2"))?;
        let value = Mlp::new(&sizes(OBS_DIM, hidden, 1), &mut seeds.stream("init/value"))?;
        Ok(Self {
            policy_opt: AdamState::new(&policy.net),
            q1_opt: AdamState::new(&q1),
            q2_opt: AdamState::new(&q2),
            value_opt: AdamState::new(&value),
            value_target: value.clone(),
            policy,
            q1,
            q2,
            value,
        })
    }
}

/// Column-stacked training batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// `1 - terminal`.
    pub continues: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition], hp: &SacHyperparams) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::Usage("empty training batch".into()));
        }
        let n = ts.len();
        let mut b = Batch {
            states: Array2::zeros((n, OBS_DIM)),
            actions: Array2::zeros((n, ACTION_DIM)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, OBS_DIM)),
            continues: Array1::zeros(n),
        };
        for (i, t) in ts.iter().enumerate() {
            for j in 0..OBS_DIM {
                b.states[[i, j]] = hp.preprocess(t.state.0[j]);
                b.next_states[[i, j]] = hp.preprocess(t.next_state.0[j]);
            }
            for j in 0..ACTION_DIM {
                b.actions[[i, j]] = t.action.0[j];
            }
            b.rewards[i] = t.reward;
            b.continues[i] = if t.terminal(hp.timeout_terminal) {
                0.0
            } else {
                1.0
            };
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Standard normal noise of shape `(rows, ACTION_DIM)`.
pub fn draw_noise<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, ACTION_DIM), || StandardNormal.sample(rng))
}

fn state_action(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    let n = states.nrows();
    let mut x = Array2::zeros((n, OBS_DIM + ACTION_DIM));
    x.slice_mut(s![.., ..OBS_DIM]).assign(states);
    x.slice_mut(s![.., OBS_DIM..]).assign(actions);
    x
}

fn column(m: Array2<f64>) -> Array1<f64> {
    m.index_axis_move(Axis(1), 0)
}

/// Reparameterized squashed samples: `(actions, log_probs, pre_tanh)`.
pub fn reparam_sample(
    out: &PolicyOutput,
    noise: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    if noise.shape() != out.mu.shape() {
        return Err(Error::Config(format!(
            "noise shape {:?} does not match policy output {:?}",
            noise.shape(),
            out.mu.shape()
        )));
    }
    let n = out.mu.nrows();
    let mut u = Array2::zeros(out.mu.raw_dim());
    Zip::from(&mut u)
        .and(&out.mu)
        .and(&out.log_sigma)
        .and(noise)
        .for_each(|u, &m, &ls, &e| *u = m + ls.exp() * e);
    let a = u.mapv(tanh_open);
    let mut logp = Array1::zeros(n);
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..out.mu.ncols() {
            let e = noise[[i, j]];
            lp += -0.5 * e * e
                - out.log_sigma[[i, j]]
                - HALF_LN_2PI
                - log_one_minus_tanh_sq(u[[i, j]]);
        }
        logp[i] = lp;
    }
    Ok((a, logp, u))
}

fn min_q(q1: &Array1<f64>, q2: &Array1<f64>) -> Array1<f64> {
    Zip::from(q1).and(q2).map_collect(|&a, &b| a.min(b))
}

fn check_loss(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} loss is not finite")))
    }
}

/// Bootstrap targets for the critics. `next_noise` is required in
/// [`QTargetMode::SoftQ`] and ignored otherwise.
pub fn q_target(
    batch: &Batch,
    params: &AgentParams,
    hp: &SacHyperparams,
    next_noise: Option<ArrayView2<f64>>,
) -> Result<Array1<f64>> {
    let next_value = match hp.q_target_mode {
        QTargetMode::ValueTarget => column(params.value_target.predict(batch.next_states.view())?),
        QTargetMode::SoftQ => {
            let noise = next_noise
                .ok_or_else(|| Error::Usage("soft-Q target needs next-action noise".into()))?;
            let out = params.policy.predict(batch.next_states.view())?;
            let (a, logp, _) = reparam_sample(&out, noise)?;
            let x = state_action(&batch.next_states, &a);
            let q = min_q(
                &column(params.q1.predict(x.view())?),
                &column(params.q2.predict(x.view())?),
            );
            q - hp.alpha * logp
        }
    };
    Ok(&batch.rewards + &(hp.gamma * &batch.continues * &next_value))
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub losses: [f64; 2],
    pub grads: [Mlp; 2],
}

pub fn critic_loss_and_grads(
    batch: &Batch,
    params: &AgentParams,
    hp: &SacHyperparams,
    next_noise: Option<ArrayView2<f64>>,
) -> Result<CriticLoss> {
    let target = q_target(batch, params, hp, next_noise)?;
    let x = state_action(&batch.states, &batch.actions);
    let n = batch.len() as f64;
    let one = |q: &Mlp, name: &str| -> Result<(f64, Mlp)> {
        let (out, cache) = q.forward(x.view())?;
        let resid = column(out) - &target;
        let loss = check_loss(name, 0.5 * resid.mapv(|r| r * r).sum() / n)?;
        let g = (resid / n).insert_axis(Axis(1));
        Ok((loss, q.backward(&cache, g.view())?.0))
    };
    let (l1, g1) = one(&params.q1, "q1")?;
    let (l2, g2) = one(&params.q2, "q2")?;
    Ok(CriticLoss {
        losses: [l1, l2],
        grads: [g1, g2],
    })
}

/// Value residual loss and its gradient w.r.t. the value network.
pub fn value_loss_and_grads(
    batch: &Batch,
    params: &AgentParams,
    hp: &SacHyperparams,
    noise: ArrayView2<f64>,
) -> Result<(f64, Mlp)> {
    let out = params.policy.predict(batch.states.view())?;
    let (a, logp, _) = reparam_sample(&out, noise)?;
    let x = state_action(&batch.states, &a);
    let q = min_q(
        &column(params.q1.predict(x.view())?),
        &column(params.q2.predict(x.view())?),
    );
    let target = q - hp.alpha * logp;
    let (v, cache) = params.value.forward(batch.states.view())?;
    let resid = column(v) - &target;
    let n = batch.len() as f64;
    let loss = check_loss("value", 0.5 * resid.mapv(|r| r * r).sum() / n)?;
    let g = (resid / n).insert_axis(Axis(1));
    Ok((loss, params.value.backward(&cache, g.view())?.0))
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Mlp,
    /// Batch mean of `log π(ã|s)`.
    pub mean_log_prob: f64,
}

/// Reparameterized actor loss for `policy` against frozen critics.
pub fn actor_loss_and_grads(
    batch: &Batch,
    policy: &Policy,
    q1: &Mlp,
    q2: &Mlp,
    hp: &SacHyperparams,
    noise: ArrayView2<f64>,
) -> Result<ActorLoss> {
    let n = batch.len();
    let nf = n as f64;
    let (out, cache) = policy.forward(batch.states.view())?;
    let (a, logp, u) = reparam_sample(&out, noise)?;
    let x = state_action(&batch.states, &a);
    let (q1v, c1) = q1.forward(x.view())?;
    let (q2v, c2) = q2.forward(x.view())?;
    let mut g1 = Array2::zeros((n, 1));
    let mut g2 = Array2::zeros((n, 1));
    let mut qmin = Array1::zeros(n);
    for i in 0..n {
        if q1v[[i, 0]] <= q2v[[i, 0]] {
            qmin[i] = q1v[[i, 0]];
            g1[[i, 0]] = -1.0 / nf;
        } else {
            qmin[i] = q2v[[i, 0]];
            g2[[i, 0]] = -1.0 / nf;
        }
    }
    let (_, dx1) = q1.backward(&c1, g1.view())?;
    let (_, dx2) = q2.backward(&c2, g2.view())?;
    let da = &dx1.slice(s![.., OBS_DIM..]) + &dx2.slice(s![.., OBS_DIM..]);

    let l2 = hp.action_l2_coef;
    let mu_sq = out.mu.mapv(|m| m * m).sum() / nf;
    let loss = check_loss("actor", (hp.alpha * &logp - &qmin).sum() / nf + l2 * mu_sq)?;

    let ent = hp.alpha / nf;
    let mut grad_mu = Array2::zeros(out.mu.raw_dim());
    let mut grad_ls = Array2::zeros(out.mu.raw_dim());
    for i in 0..n {
        for j in 0..ACTION_DIM {
            let t = u[[i, j]].tanh();
            // d log π / d u = 2 tanh(u) from the squashing correction
            let du = da[[i, j]] * (1.0 - t * t) + ent * 2.0 * t;
            let sigma_eps = out.log_sigma[[i, j]].exp() * noise[[i, j]];
            grad_mu[[i, j]] = du + l2 * 2.0 * out.mu[[i, j]] / nf;
            grad_ls[[i, j]] = du * sigma_eps - ent;
        }
    }
    let grads = policy.backward(&out, &cache, grad_mu.view(), grad_ls.view())?;
    Ok(ActorLoss {
        loss,
        grads,
        mean_log_prob: logp.sum() / nf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

/// Chooses an action for one observation.
///
/// Eval is `tanh(mu)`. Train takes a uniform random action with probability
/// `random_action_prob`, otherwise a squashed-Gaussian sample plus clipped
/// additive Gaussian noise.
pub fn act<R: Rng + ?Sized>(
    obs: &Observation,
    policy: &Policy,
    hp: &SacHyperparams,
    mode: ActMode,
    rng: &mut R,
) -> Result<Action> {
    let x = hp.preprocess_obs(obs);
    let raw = policy.net.predict_one(&x)?;
    let (mu, ls) = raw.split_at(ACTION_DIM);
    let mut a = [0.0; ACTION_DIM];
    match mode {
        ActMode::Eval => {
            let out = gaussian_head_sample(mu, ls, &[], true);
            a.copy_from_slice(&out.sampled_action);
        }
        ActMode::Train => {
            if rng.random::<f64>() < hp.random_action_prob {
                return Ok(random_action(rng));
            }
            let noise: [f64; ACTION_DIM] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let out = gaussian_head_sample(mu, ls, &noise, false);
            for (j, v) in a.iter_mut().enumerate() {
                let extra: f64 = StandardNormal.sample(rng);
                *v = (out.sampled_action[j] + hp.gaussian_noise_scale * extra).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(Action(a))
}

pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub value_loss: f64,
    pub q_losses: [f64; 2],
    pub actor_loss: f64,
    pub mean_log_prob: f64,
}

/// One gradient step: value, both critics, actor, then the value target.
pub fn train_step<R: Rng + ?Sized>(
    batch: &Batch,
    params: &mut AgentParams,
    hp: &SacHyperparams,
    rng: &mut R,
) -> Result<TrainStats> {
    let n = batch.len();
    let value_noise = draw_noise(n, rng);
    let (value_loss, gv) = value_loss_and_grads(batch, params, hp, value_noise.view())?;
    adam_step(&mut params.value, &gv, &mut params.value_opt, hp.lr_value)?;

    let next_noise = match hp.q_target_mode {
        QTargetMode::SoftQ => Some(draw_noise(n, rng)),
        QTargetMode::ValueTarget => None,
    };
    let critic = critic_loss_and_grads(batch, params, hp, next_noise.as_ref().map(|a| a.view()))?;
    let [g1, g2] = &critic.grads;
    adam_step(&mut params.q1, g1, &mut params.q1_opt, hp.lr_q)?;
    adam_step(&mut params.q2, g2, &mut params.q2_opt, hp.lr_q)?;

    let actor_noise = draw_noise(n, rng);
    let actor = actor_loss_and_grads(
        batch,
        &params.policy,
        &params.q1,
        &params.q2,
        hp,
        actor_noise.view(),
    )?;
    adam_step(
        &mut params.policy.net,
        &actor.grads,
        &mut params.policy_opt,
        hp.lr_policy,
    )?;

    polyak_update(&mut params.value_target, &params.value, hp.tau)?;
    Ok(TrainStats {
        value_loss,
        q_losses: critic.losses,
        actor_loss: actor.loss,
        mean_log_prob: actor.mean_log_prob,
    })
}
