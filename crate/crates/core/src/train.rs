//! Episode loop for one training scope (a module or a task).

use rand::Rng;

use crate::env::{self, TaskSpec};
use crate::error::{Error, Result};
use crate::hasac::{hyper_update, HyperActor};
use crate::metrics::{CurveLabel, CurvePoint, TrainingCurve};
use crate::nn::Policy;
use crate::replay::{
    push_routed, sample_union, EliteReplayBuffer, ReplayBuffer, Threshold, ThresholdMode,
};
use crate::rng::SeedTree;
use crate::sac::{act, random_action, train_step, ActMode, AgentParams, Batch, SacHyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// One gradient step per environment step after warmup.
    Desk,
    /// Cycles of one episode followed by `batches_per_cycle` gradient steps,
    /// with test rollouts after every `cycles_per_epoch` cycles.
    Epochs,
}

/// Elite threshold choice for a scope.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSpec {
    /// `-success_radius * joint_error_coef` of the scope's environment.
    Auto,
    Fixed(f64),
    Percentile {
        quantile: f64,
        window: usize,
    },
}

impl ThresholdSpec {
    pub fn resolve(&self, spec: &TaskSpec) -> ThresholdMode {
        let auto = -spec.success_radius * spec.constants.joint_error_coef;
        match *self {
            ThresholdSpec::Auto => ThresholdMode::Fixed(auto),
            ThresholdSpec::Fixed(z) => ThresholdMode::Fixed(z),
            ThresholdSpec::Percentile { quantile, window } => ThresholdMode::Percentile {
                quantile,
                window,
                initial: auto,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingSpec {
    pub threshold: ThresholdSpec,
    pub elite_fraction: f64,
}

impl RoutingSpec {
    /// Everything goes to `D`.
    pub fn plain() -> Self {
        Self {
            threshold: ThresholdSpec::Fixed(f64::INFINITY),
            elite_fraction: 0.0,
        }
    }
}

impl Default for RoutingSpec {
    fn default() -> Self {
        Self {
            threshold: ThresholdSpec::Auto,
            elite_fraction: crate::replay::DEFAULT_ELITE_FRACTION,
        }
    }
}

/// Training settings shared by every scope of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hp: SacHyperparams,
    pub schedule: Schedule,
    /// Steps before updates begin in a scope whose actor came from a trained
    /// hyper-actor. Such scopes act with their policy from the first step.
    pub transfer_warmup_steps: usize,
    /// Keep one pair of buffers for the whole run instead of one per scope.
    pub share_buffers: bool,
    pub hyper_updates: bool,
    /// Seed each task's module hyper-actor from the previous task's.
    pub chain_module_hyper: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hp: SacHyperparams::default(),
            schedule: Schedule::Desk,
            transfer_warmup_steps: 1000,
            share_buffers: false,
            hyper_updates: true,
            chain_module_hyper: false,
        }
    }
}

/// `D`, `D_e` and the threshold routing between them.
#[derive(Debug, Clone)]
pub struct Buffers {
    pub d: ReplayBuffer,
    pub de: EliteReplayBuffer,
    pub threshold: Threshold,
}

impl Buffers {
    pub fn new(hp: &SacHyperparams, mode: ThresholdMode) -> Result<Self> {
        let th = Threshold::new(mode)?;
        Ok(Self {
            d: ReplayBuffer::new(hp.buffer_capacity),
            de: EliteReplayBuffer::new(hp.elite_capacity, th.current()),
            threshold: th,
        })
    }

    pub fn len(&self) -> usize {
        self.d.len() + self.de.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Deterministic-policy rollouts.
pub fn evaluate<R: Rng + ?Sized>(
    policy: &Policy,
    spec: &TaskSpec,
    hp: &SacHyperparams,
    episodes: usize,
    rng: &mut R,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Ok(EvalResult {
            success_rate: 0.0,
            mean_return: 0.0,
        });
    }
    let mut wins = 0usize;
    let mut total = 0.0;
    for _ in 0..episodes {
        let (mut s, mut obs) = env::reset(spec, rng);
        let mut solved = false;
        while !s.done {
            let a = act(&obs, policy, hp, ActMode::Eval, rng)?;
            let (n, t) = env::step(&s, &a, spec)?;
            total += t.reward;
            solved |= t.success;
            obs = t.next_state;
            s = n;
        }
        wins += usize::from(solved);
    }
    Ok(EvalResult {
        success_rate: wins as f64 / episodes as f64,
        mean_return: total / episodes as f64,
    })
}

/// What to train in one scope.
#[derive(Debug, Clone)]
pub struct ScopeSetup<'a> {
    pub spec: &'a TaskSpec,
    pub episodes: usize,
    pub routing: &'a RoutingSpec,
    pub algorithm: &'a str,
    pub seed: u64,
    /// Untrained local actor: uniform random actions during warmup.
    pub fresh: bool,
}

#[derive(Debug, Clone)]
pub struct ScopeOutcome {
    pub curve: TrainingCurve,
    /// Deterministic evaluation after the last episode.
    pub eval: EvalResult,
    /// `(episodes completed, eval)` at each epoch end of the table-1 schedule.
    pub epoch_evals: Vec<(usize, EvalResult)>,
    pub gradient_steps: usize,
}

fn in_scope(scope: &str, e: Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("scope {scope}: {m}")),
        Error::Config(m) => Error::Config(format!("scope {scope}: {m}")),
        Error::Usage(m) => Error::Usage(format!("scope {scope}: {m}")),
        other => other,
    }
}

struct Streams {
    env: crate::rng::Rng,
    explore: crate::rng::Rng,
    sample: crate::rng::Rng,
    update: crate::rng::Rng,
    hyper: crate::rng::Rng,
    eval: crate::rng::Rng,
}

impl Streams {
    fn new(seeds: &SeedTree) -> Self {
        Self {
            env: seeds.stream("env"),
            explore: seeds.stream("explore"),
            sample: seeds.stream("sample"),
            update: seeds.stream("update"),
            hyper: seeds.stream("hyper"),
            eval: seeds.stream("eval"),
        }
    }
}

/// Trains `agent` on one scope, optionally co-training a hyper-actor against
/// the scope's critic after every gradient step.
pub fn train_scope(
    setup: &ScopeSetup<'_>,
    agent: &mut AgentParams,
    mut hyper: Option<&mut HyperActor>,
    buffers: &mut Buffers,
    cfg: &TrainConfig,
    seeds: &SeedTree,
) -> Result<ScopeOutcome> {
    let scope = setup.spec.label();
    let mut run = || -> Result<ScopeOutcome> {
        let hp = &cfg.hp;
        let spec = setup.spec;
        let mut rng = Streams::new(seeds);
        let learn_start = if setup.fresh {
            hp.warmup_steps
        } else {
            cfg.transfer_warmup_steps
        };
        let mut curve = TrainingCurve::new(CurveLabel {
            scope: scope.clone(),
            algorithm: setup.algorithm.to_string(),
            seed: setup.seed,
        });
        let mut steps = 0usize;
        let mut grad_steps = 0usize;
        let mut epoch_evals = Vec::new();

        let mut gradient_step = |agent: &mut AgentParams,
                                 hyper: &mut Option<&mut HyperActor>,
                                 buffers: &Buffers,
                                 rng: &mut Streams|
         -> Result<()> {
            let ts = sample_union(
                &buffers.d,
                &buffers.de,
                hp.batch_size,
                setup.routing.elite_fraction,
                &mut rng.sample,
            )?;
            let batch = Batch::from_transitions(&ts, hp)?;
            train_step(&batch, agent, hp, &mut rng.update)?;
            if let Some(h) = hyper.as_deref_mut() {
                hyper_update(h, &batch, &agent.q1, &agent.q2, hp, &mut rng.hyper)?;
            }
            grad_steps += 1;
            Ok(())
        };

        for episode in 0..setup.episodes {
            let (mut state, mut obs) = env::reset(spec, &mut rng.env);
            let mut ret = 0.0;
            let mut solved = false;
            while !state.done {
                let a = if setup.fresh && steps < hp.warmup_steps {
                    random_action(&mut rng.explore)
                } else {
                    act(&obs, &agent.policy, hp, ActMode::Train, &mut rng.explore)?
                };
                let (next, t) = env::step(&state, &a, spec)?;
                buffers.threshold.observe(t.reward);
                push_routed(
                    t,
                    buffers.threshold.current(),
                    &mut buffers.d,
                    &mut buffers.de,
                );
                steps += 1;
                ret += t.reward;
                solved |= t.success;
                obs = t.next_state;
                state = next;
                if cfg.schedule == Schedule::Desk && steps >= learn_start {
                    for _ in 0..hp.updates_per_step {
                        gradient_step(agent, &mut hyper, buffers, &mut rng)?;
                    }
                }
            }
            curve.push(CurvePoint {
                episode,
                ret,
                success: solved,
                env_steps: steps,
            })?;
            if cfg.schedule == Schedule::Epochs {
                if steps >= learn_start {
                    for _ in 0..hp.batches_per_cycle {
                        gradient_step(agent, &mut hyper, buffers, &mut rng)?;
                    }
                }
                if hp.cycles_per_epoch > 0 && (episode + 1) % hp.cycles_per_epoch == 0 {
                    let e = evaluate(&agent.policy, spec, hp, hp.test_rollouts, &mut rng.eval)?;
                    epoch_evals.push((episode + 1, e));
                }
            }
        }
        let eval = evaluate(&agent.policy, spec, hp, hp.test_rollouts, &mut rng.eval)?;
        Ok(ScopeOutcome {
            curve,
            eval,
            epoch_evals,
            gradient_steps: grad_steps,
        })
    };
    run().map_err(|e| in_scope(&scope, e))
}
