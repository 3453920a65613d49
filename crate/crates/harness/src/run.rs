//! `run`: trains every seed of a config and writes a self-describing run directory.
//!
//! ```text
//! <out_dir>/config.toml            resolved config
//! <out_dir>/summary.json           per-scope aggregates over seeds
//! <out_dir>/seed-<s>/curves/*.csv  one curve per scope
//! <out_dir>/seed-<s>/checkpoints/  learners and hyper-actors
//! <out_dir>/seed-<s>/metrics.json  per-scope metrics for this seed
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hasac_core::checkpoint::Checkpoint;
use hasac_core::hasac::{module_checkpoint_path, run_hasac, run_sac_scope};
use hasac_core::metrics::{report, MetricWindows, TrainingCurve};
use hasac_core::sac::AgentParams;
use hasac_core::train::{EvalResult, ScopeOutcome};
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig, Plan};
use crate::curves::save_curve;
use crate::{HarnessError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeSummary {
    pub scope: String,
    pub episodes: usize,
    pub env_steps: usize,
    pub gradient_steps: usize,
    pub train_success_rate: f64,
    pub mean_return: f64,
    pub std_return: f64,
    pub max_return: f64,
    pub min_return: f64,
    pub asymptotic_performance: f64,
    pub eval_success_rate: f64,
    pub eval_mean_return: f64,
}

impl ScopeSummary {
    fn of(outcome: &ScopeOutcome) -> Result<Self> {
        let c = &outcome.curve;
        let r = report(c, None, &MetricWindows::default())?;
        Ok(Self {
            scope: c.label.scope.clone(),
            episodes: c.len(),
            env_steps: c.points().last().map_or(0, |p| p.env_steps),
            gradient_steps: outcome.gradient_steps,
            train_success_rate: r.success_rate,
            mean_return: r.stats.mean,
            std_return: r.stats.std,
            max_return: r.stats.max,
            min_return: r.stats.min,
            asymptotic_performance: r.asymptotic_performance,
            eval_success_rate: outcome.eval.success_rate,
            eval_mean_return: outcome.eval.mean_return,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub dir: PathBuf,
    pub curves: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub scopes: Vec<ScopeSummary>,
    /// Task-level curves in curriculum order (for a single-scope run, that scope).
    pub task_curves: Vec<TrainingCurve>,
    pub task_evals: Vec<EvalResult>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedArtifacts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeAggregate {
    pub scope: String,
    pub seeds: usize,
    pub median_eval_success_rate: f64,
    pub median_eval_mean_return: f64,
    pub mean_train_return: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn save_agent(agent: &AgentParams, path: &Path) -> Result<PathBuf> {
    let mut ck = Checkpoint::new();
    ck.add_agent("agent", agent);
    ck.save(path)?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<SeedArtifacts> {
    let train = cfg.train_config()?;
    let curves_dir = dir.join("curves");
    let ck_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&curves_dir)?;
    std::fs::create_dir_all(&ck_dir)?;
    let mut art = SeedArtifacts {
        seed,
        dir: dir.to_path_buf(),
        curves: Vec::new(),
        checkpoints: Vec::new(),
        scopes: Vec::new(),
        task_curves: Vec::new(),
        task_evals: Vec::new(),
    };
    let record = |art: &mut SeedArtifacts, o: &ScopeOutcome, is_task: bool| -> Result<()> {
        art.curves.push(save_curve(&o.curve, &curves_dir)?);
        art.scopes.push(ScopeSummary::of(o)?);
        if is_task {
            art.task_curves.push(o.curve.clone());
            art.task_evals.push(o.eval);
        }
        Ok(())
    };
    let agent_path = |scope: &str| ck_dir.join(format!("agent.{}.ckpt", scope.replace('/', ".")));

    match (cfg.plan()?, cfg.algorithm) {
        (Plan::Single { spec, episodes }, _) => {
            let (agent, o) = run_sac_scope(&spec, episodes, &train, seed)?;
            record(&mut art, &o, true)?;
            art.checkpoints
                .push(save_agent(&agent, &agent_path(&spec.label()))?);
        }
        (Plan::Curriculum(cur), Algorithm::Sac) => {
            for e in &cur.entries {
                let (agent, o) = run_sac_scope(&e.task, e.task_episodes, &train, seed)?;
                record(&mut art, &o, true)?;
                art.checkpoints
                    .push(save_agent(&agent, &agent_path(&e.task.label()))?);
            }
        }
        (Plan::Curriculum(cur), Algorithm::Hasac) => {
            let out = run_hasac(&cur, &train, seed, Some(&ck_dir))?;
            for t in &out.tasks {
                for m in &t.modules {
                    record(&mut art, m, false)?;
                }
                record(&mut art, &t.task, true)?;
                art.checkpoints.push(save_agent(
                    &t.agent,
                    &agent_path(&t.task.curve.label.scope),
                )?);
                art.checkpoints
                    .push(module_checkpoint_path(&ck_dir, cur_name(&t.task)?));
            }
            let path = ck_dir.join("hyper-task.ckpt");
            out.task_hyper.to_checkpoint("hyper-task").save(&path)?;
            art.checkpoints.push(path);
        }
    }
    write_json(&art.scopes, &dir.join(METRICS_FILE))?;
    Ok(art)
}

fn cur_name(o: &ScopeOutcome) -> Result<hasac_core::env::TaskName> {
    o.curve.label.scope.parse().map_err(HarnessError::from)
}

/// Runs every seed of `cfg`; with `quiet` off, prints one line per finished scope.
pub fn run(cfg: &ExperimentConfig, quiet: bool) -> Result<RunArtifacts> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    let mut seeds = Vec::new();
    for seed in cfg.seed_list() {
        let art = run_seed(cfg, seed, &dir.join(format!("seed-{seed}")))?;
        if !quiet {
            for s in &art.scopes {
                eprintln!(
                    "seed {seed} {:<24} episodes {:>4}  eval success {:.2}  eval return {:9.3}",
                    s.scope, s.episodes, s.eval_success_rate, s.eval_mean_return
                );
            }
        }
        seeds.push(art);
    }
    write_json(&aggregate(&seeds), &dir.join(SUMMARY_FILE))?;
    Ok(RunArtifacts {
        dir,
        config: cfg.clone(),
        seeds,
    })
}

pub fn aggregate(seeds: &[SeedArtifacts]) -> Vec<ScopeAggregate> {
    let mut by: BTreeMap<&str, Vec<&ScopeSummary>> = BTreeMap::new();
    let mut order = Vec::new();
    for a in seeds {
        for s in &a.scopes {
            if !by.contains_key(s.scope.as_str()) {
                order.push(s.scope.as_str());
            }
            by.entry(&s.scope).or_default().push(s);
        }
    }
    order
        .into_iter()
        .map(|scope| {
            let v = &by[scope];
            let mut succ: Vec<f64> = v.iter().map(|s| s.eval_success_rate).collect();
            let mut ret: Vec<f64> = v.iter().map(|s| s.eval_mean_return).collect();
            ScopeAggregate {
                scope: scope.to_string(),
                seeds: v.len(),
                median_eval_success_rate: median(&mut succ),
                median_eval_mean_return: median(&mut ret),
                mean_train_return: v.iter().map(|s| s.mean_return).sum::<f64>() / v.len() as f64,
            }
        })
        .collect()
}
