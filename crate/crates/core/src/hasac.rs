//! Hyper-actor orchestration over a module/task curriculum.
//!
//! Two shared policies ride along with the ordinary SAC learners:
//!
//! - the module hyper-actor, allocated at the start of each task and trained
//!   against the critic of each of that task's modules in turn;
//! - the task hyper-actor, allocated once per run and trained against the
//!   critic of every task.
//!
//! Each hyper-actor has its own persistent Adam state, so its updates
//! accumulate across scope boundaries. Every new scope gets a fresh critic; its
//! local actor is copied from the module hyper-actor.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::checkpoint::Checkpoint;
use crate::env::{TaskName, TaskSpec};
use crate::error::{config, Error, Result};
use crate::nn::{adam_step, AdamState, Policy};
use crate::rng::SeedTree;
use crate::sac::{
    actor_loss_and_grads, draw_noise, init_policy, AgentParams, Batch, SacHyperparams,
};
use crate::train::{train_scope, Buffers, RoutingSpec, ScopeOutcome, ScopeSetup, TrainConfig};

pub const DEFAULT_MODULE_EPISODES: usize = 300;
pub const DEFAULT_TASK_EPISODES: usize = 500;

/// A shared policy with its own optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperActor {
    pub policy: Policy,
    pub opt: AdamState,
}

impl HyperActor {
    pub fn new(hidden: &[usize], seeds: &SeedTree) -> Result<Self> {
        let policy = init_policy(hidden, seeds)?;
        Ok(Self {
            opt: AdamState::new(&policy.net),
            policy,
        })
    }

    /// Whether any hyper update has been applied yet.
    pub fn is_untrained(&self) -> bool {
        self.opt.step_count == 0
    }

    pub fn to_checkpoint(&self, prefix: &str) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.add_policy(prefix, &self.policy, &self.opt);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, prefix: &str, like: &Policy) -> Result<Self> {
        let (policy, opt) = ck.policy_like(prefix, like)?;
        Ok(Self { policy, opt })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperActorParams {
    pub task_level: HyperActor,
    /// Live only while a task is being trained.
    pub module_level: Option<HyperActor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumEntry {
    pub task: TaskSpec,
    pub module_episodes: usize,
    pub task_episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSpec {
    pub entries: Vec<CurriculumEntry>,
    pub module_routing: RoutingSpec,
    pub task_routing: RoutingSpec,
}

impl CurriculumSpec {
    pub fn new(tasks: &[TaskName], module_episodes: usize, task_episodes: usize) -> Self {
        Self {
            entries: tasks
                .iter()
                .map(|&t| CurriculumEntry {
                    task: TaskSpec::standard(t),
                    module_episodes,
                    task_episodes,
                })
                .collect(),
            module_routing: RoutingSpec::default(),
            task_routing: RoutingSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return config("curriculum has no tasks");
        }
        for e in &self.entries {
            e.task.validate()?;
            if e.task.is_module() {
                return config(format!("{} is a module, not a task", e.task.name));
            }
            if e.task.module_sequence.is_empty() {
                return config(format!("{} has no modules", e.task.name));
            }
        }
        for r in [&self.module_routing, &self.task_routing] {
            if !(0.0..=1.0).contains(&r.elite_fraction) {
                return config("elite_fraction outside [0, 1]");
            }
        }
        Ok(())
    }
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        Self::new(
            &TaskName::TASKS,
            DEFAULT_MODULE_EPISODES,
            DEFAULT_TASK_EPISODES,
        )
    }
}

/// Parses a curriculum listing: one task per line, optionally followed by
/// `module_episodes=N` and/or `task_episodes=N`. `#` starts a comment.
pub fn parse_curriculum(
    text: &str,
    module_episodes: usize,
    task_episodes: usize,
) -> Result<CurriculumSpec> {
    let mut spec = CurriculumSpec::new(&[], module_episodes, task_episodes);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let name: TaskName = words.next().unwrap().parse()?;
        let mut entry = CurriculumEntry {
            task: TaskSpec::standard(name),
            module_episodes,
            task_episodes,
        };
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key=value, got `{w}`",
                    lineno + 1
                ))
            })?;
            let n: usize = v
                .parse()
                .map_err(|_| Error::Config(format!("line {}: `{v}` is not a count", lineno + 1)))?;
            match k {
                "module_episodes" => entry.module_episodes = n,
                "task_episodes" => entry.task_episodes = n,
                _ => return config(format!("line {}: unknown override `{k}`", lineno + 1)),
            }
        }
        spec.entries.push(entry);
    }
    spec.validate()?;
    Ok(spec)
}

/// Task hyper-actor for the run; no module hyper-actor yet.
pub fn init_hyper_actors(cfg: &TrainConfig, seed: u64) -> Result<HyperActorParams> {
    Ok(HyperActorParams {
        task_level: HyperActor::new(&cfg.hp.hidden, &SeedTree::new(seed).child("hyper-task"))?,
        module_level: None,
    })
}

/// Allocates the module hyper-actor for `task`. It is initialized from the same
/// stream a from-scratch learner on this task would use for its policy, or
/// copied from `previous` when chaining is enabled.
pub fn begin_task(
    hyper: &mut HyperActorParams,
    task: &TaskSpec,
    cfg: &TrainConfig,
    seed: u64,
    previous: Option<&HyperActor>,
) -> Result<()> {
    let fresh = || HyperActor::new(&cfg.hp.hidden, &SeedTree::new(seed).child(&task.label()));
    hyper.module_level = Some(match previous {
        Some(p) if cfg.chain_module_hyper => p.clone(),
        _ => fresh()?,
    });
    Ok(())
}

/// Copies `source` into the local actor and resets the local optimizer.
pub fn transfer_init(
    local: &mut Policy,
    local_opt: &mut AdamState,
    source: &HyperActor,
) -> Result<()> {
    if !local.net.same_shape(&source.policy.net) {
        return config(format!(
            "cannot transfer hyper-actor of shape {:?} into actor of shape {:?}",
            source.policy.net.sizes(),
            local.net.sizes()
        ));
    }
    *local = source.policy.clone();
    *local_opt = AdamState::new(&local.net);
    Ok(())
}

/// One actor-loss step on the hyper-actor's own parameters against the given
/// critics. Returns the loss.
pub fn hyper_update<R: Rng + ?Sized>(
    hyper: &mut HyperActor,
    batch: &Batch,
    q1: &crate::nn::Mlp,
    q2: &crate::nn::Mlp,
    hp: &SacHyperparams,
    rng: &mut R,
) -> Result<f64> {
    let noise = draw_noise(batch.len(), rng);
    let out = actor_loss_and_grads(batch, &hyper.policy, q1, q2, hp, noise.view())?;
    adam_step(
        &mut hyper.policy.net,
        &out.grads,
        &mut hyper.opt,
        hp.lr_policy,
    )?;
    Ok(out.loss)
}

#[derive(Debug, Clone)]
pub struct ModuleOutcome {
    /// Local learner at the end of the module; discarded by the curriculum.
    pub agent: AgentParams,
    pub outcome: ScopeOutcome,
}

fn scope_buffers(
    shared: &mut Option<Buffers>,
    cfg: &TrainConfig,
    routing: &RoutingSpec,
    spec: &TaskSpec,
) -> Result<Buffers> {
    let mode = routing.threshold.resolve(spec);
    match shared.take() {
        Some(mut b) if cfg.share_buffers => {
            b.threshold = crate::replay::Threshold::new(mode)?;
            Ok(b)
        }
        _ => Buffers::new(&cfg.hp, mode),
    }
}

fn keep_buffers(shared: &mut Option<Buffers>, cfg: &TrainConfig, b: Buffers) {
    if cfg.share_buffers {
        *shared = Some(b);
    }
}

/// Trains one module with a local learner initialized from the module hyper-actor.
#[allow(clippy::too_many_arguments)]
pub fn run_module(
    module: &TaskSpec,
    hyper: &mut HyperActorParams,
    cfg: &TrainConfig,
    episodes: usize,
    routing: &RoutingSpec,
    seed: u64,
    shared: &mut Option<Buffers>,
) -> Result<ModuleOutcome> {
    let seeds = SeedTree::new(seed).child(&module.label());
    let source = hyper
        .module_level
        .as_mut()
        .ok_or_else(|| Error::Usage("run_module called before begin_task".into()))?;
    let mut agent = AgentParams::new(&cfg.hp.hidden, &seeds)?;
    transfer_init(&mut agent.policy, &mut agent.policy_opt, source)?;
    let fresh = source.is_untrained();
    let mut buffers = scope_buffers(shared, cfg, routing, module)?;
    let setup = ScopeSetup {
        spec: module,
        episodes,
        routing,
        algorithm: "hasac",
        seed,
        fresh,
    };
    let target = if cfg.hyper_updates {
        Some(source)
    } else {
        None
    };
    let outcome = train_scope(&setup, &mut agent, target, &mut buffers, cfg, &seeds)?;
    keep_buffers(shared, cfg, buffers);
    Ok(ModuleOutcome { agent, outcome })
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub task: ScopeOutcome,
    /// Local learner of the task phase.
    pub agent: AgentParams,
    pub modules: Vec<ScopeOutcome>,
    /// Module hyper-actor as checkpointed at the end of the task.
    pub module_hyper: HyperActor,
    pub checkpoint: Option<PathBuf>,
}

pub fn module_checkpoint_path(dir: &Path, task: TaskName) -> PathBuf {
    dir.join(format!("hyper-module.{task}.ckpt"))
}

/// Modules first, then the task itself with its actor transferred from the
/// module hyper-actor and the task hyper-actor trained against the task critic.
/// The module hyper-actor is saved under `checkpoint_dir` and released.
#[allow(clippy::too_many_arguments)]
pub fn run_task(
    entry: &CurriculumEntry,
    hyper: &mut HyperActorParams,
    cfg: &TrainConfig,
    curriculum: &CurriculumSpec,
    seed: u64,
    previous: Option<&HyperActor>,
    shared: &mut Option<Buffers>,
    checkpoint_dir: Option<&Path>,
) -> Result<TaskOutcome> {
    let task = &entry.task;
    begin_task(hyper, task, cfg, seed, previous)?;
    let mut modules = Vec::new();
    for m in crate::env::module_specs(task)? {
        let out = run_module(
            &m,
            hyper,
            cfg,
            entry.module_episodes,
            &curriculum.module_routing,
            seed,
            shared,
        )?;
        modules.push(out.outcome);
    }

    let seeds = SeedTree::new(seed).child(&task.label());
    let module_hyper = hyper.module_level.take().expect("allocated by begin_task");
    let mut agent = AgentParams::new(&cfg.hp.hidden, &seeds)?;
    transfer_init(&mut agent.policy, &mut agent.policy_opt, &module_hyper)?;
    let mut buffers = scope_buffers(shared, cfg, &curriculum.task_routing, task)?;
    let setup = ScopeSetup {
        spec: task,
        episodes: entry.task_episodes,
        routing: &curriculum.task_routing,
        algorithm: "hasac",
        seed,
        fresh: module_hyper.is_untrained(),
    };
    let target = if cfg.hyper_updates {
        Some(&mut hyper.task_level)
    } else {
        None
    };
    let outcome = train_scope(&setup, &mut agent, target, &mut buffers, cfg, &seeds)?;
    keep_buffers(shared, cfg, buffers);

    let checkpoint = match checkpoint_dir {
        Some(dir) => {
            let path = module_checkpoint_path(dir, task.name);
            module_hyper.to_checkpoint("hyper-module").save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TaskOutcome {
        task: outcome,
        agent,
        modules,
        module_hyper,
        checkpoint,
    })
}

#[derive(Debug, Clone)]
pub struct HasacOutcome {
    pub task_hyper: HyperActor,
    pub tasks: Vec<TaskOutcome>,
}

impl HasacOutcome {
    /// Task-level gradient steps summed over the curriculum.
    pub fn task_gradient_steps(&self) -> usize {
        self.tasks.iter().map(|t| t.task.gradient_steps).sum()
    }
}

/// The whole curriculum. Returns the trained task hyper-actor and every curve.
pub fn run_hasac(
    curriculum: &CurriculumSpec,
    cfg: &TrainConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<HasacOutcome> {
    curriculum.validate()?;
    cfg.hp.validate()?;
    let mut hyper = init_hyper_actors(cfg, seed)?;
    let mut shared = None;
    let mut tasks: Vec<TaskOutcome> = Vec::new();
    for entry in &curriculum.entries {
        let previous = tasks.last().map(|t| &t.module_hyper);
        let out = run_task(
            entry,
            &mut hyper,
            cfg,
            curriculum,
            seed,
            previous,
            &mut shared,
            checkpoint_dir,
        )?;
        tasks.push(out);
    }
    Ok(HasacOutcome {
        task_hyper: hyper.task_level,
        tasks,
    })
}

/// From-scratch SAC on every task of the curriculum, with only the standard buffer.
pub fn run_sac(
    curriculum: &CurriculumSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<ScopeOutcome>> {
    curriculum.validate()?;
    cfg.hp.validate()?;
    curriculum
        .entries
        .iter()
        .map(|e| run_sac_scope(&e.task, e.task_episodes, cfg, seed).map(|(_, o)| o))
        .collect()
}

/// From-scratch SAC on a single task or module.
pub fn run_sac_scope(
    spec: &TaskSpec,
    episodes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(AgentParams, ScopeOutcome)> {
    let seeds = SeedTree::new(seed).child(&spec.label());
    let routing = RoutingSpec::plain();
    let mut agent = AgentParams::new(&cfg.hp.hidden, &seeds)?;
    let mut buffers = Buffers::new(&cfg.hp, routing.threshold.resolve(spec))?;
    let setup = ScopeSetup {
        spec,
        episodes,
        routing: &routing,
        algorithm: "sac",
        seed,
        fresh: true,
    };
    let out = train_scope(&setup, &mut agent, None, &mut buffers, cfg, &seeds)?;
    Ok((agent, out))
}
