//! Experiment configuration: a TOML file, `SEED` / `OUT_DIR` from the
//! environment, then `key=value` overrides. Unknown keys are rejected at every
//! layer because the merged table is deserialized with `deny_unknown_fields`.

use std::path::{Path, PathBuf};

use hasac_core::env::{TaskName, TaskSpec};
use hasac_core::hasac::CurriculumSpec;
use hasac_core::sac::{QTargetMode, SacHyperparams};
use hasac_core::train::{RoutingSpec, Schedule, ThresholdSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sac,
    Hasac,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::Hasac => "hasac",
        }
    }
}

/// Overrides of the manipulation suite's shaping constants. Unset fields keep
/// the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    pub step_size: Option<f64>,
    pub joint_gain: Option<f64>,
    pub grasp_radius: Option<f64>,
    pub joint_error_coef: Option<f64>,
    pub success_bonus: Option<f64>,
    pub joint_jitter: Option<f64>,
    pub success_radius: Option<f64>,
    pub episode_length: Option<usize>,
}

impl EnvOverrides {
    pub fn apply(&self, spec: &mut TaskSpec) {
        let c = &mut spec.constants;
        if let Some(v) = self.step_size {
            c.step_size = v;
        }
        if let Some(v) = self.joint_gain {
            c.joint_gain = v;
        }
        if let Some(v) = self.grasp_radius {
            c.grasp_radius = v;
        }
        if let Some(v) = self.joint_error_coef {
            c.joint_error_coef = v;
        }
        if let Some(v) = self.success_bonus {
            c.success_bonus = v;
        }
        if let Some(v) = self.joint_jitter {
            c.joint_jitter = v;
        }
        if let Some(v) = self.success_radius {
            spec.success_radius = v;
        }
        if let Some(v) = self.episode_length {
            spec.episode_length = v;
        }
        spec.rebuild_modules();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Single task or module. When unset the curriculum is run.
    pub task: Option<String>,
    pub curriculum: Vec<String>,
    pub module_episodes: usize,
    pub task_episodes: usize,
    /// Episodes per scope; overrides both of the above when set.
    pub budget: Option<usize>,
    /// First seed; the run uses `seed .. seed + seeds`.
    pub seed: u64,
    pub seeds: usize,
    pub out_dir: PathBuf,
    pub schedule: String,

    /// `auto`, `fixed` (uses `zeta`) or `percentile`.
    pub zeta_mode: String,
    pub zeta: Option<f64>,
    pub zeta_quantile: f64,
    pub zeta_window: usize,
    pub elite_fraction: f64,
    pub transfer_warmup_steps: usize,
    pub share_buffers: bool,
    pub hyper_updates: bool,
    pub chain_module_hyper: bool,

    pub gamma: f64,
    pub lr_value: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    pub tau: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub random_action_prob: f64,
    pub gaussian_noise_scale: f64,
    pub normalized_clip: f64,
    pub obs_clip: f64,
    pub action_l2_coef: f64,
    pub hidden: Vec<usize>,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    /// `value` (V-target bootstrap) or `soft-q`.
    pub q_target: String,
    pub timeout_terminal: bool,
    pub buffer_capacity: usize,
    pub elite_capacity: usize,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub batches_per_cycle: usize,
    pub test_rollouts: usize,

    pub env: EnvOverrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hp = SacHyperparams::default();
        let train = TrainConfig::default();
        let routing = RoutingSpec::default();
        Self {
            algorithm: Algorithm::Hasac,
            task: None,
            curriculum: TaskName::TASKS
                .iter()
                .map(|t| t.as_str().to_string())
                .collect(),
            module_episodes: hasac_core::hasac::DEFAULT_MODULE_EPISODES,
            task_episodes: hasac_core::hasac::DEFAULT_TASK_EPISODES,
            budget: None,
            seed: 0,
            seeds: 1,
            out_dir: PathBuf::from("runs/latest"),
            schedule: "desk".into(),
            zeta_mode: "auto".into(),
            zeta: None,
            zeta_quantile: 0.9,
            zeta_window: 10_000,
            elite_fraction: routing.elite_fraction,
            transfer_warmup_steps: train.transfer_warmup_steps,
            share_buffers: train.share_buffers,
            hyper_updates: train.hyper_updates,
            chain_module_hyper: train.chain_module_hyper,
            gamma: hp.gamma,
            lr_value: hp.lr_value,
            lr_q: hp.lr_q,
            lr_policy: hp.lr_policy,
            tau: hp.tau,
            alpha: hp.alpha,
            batch_size: hp.batch_size,
            random_action_prob: hp.random_action_prob,
            gaussian_noise_scale: hp.gaussian_noise_scale,
            normalized_clip: hp.normalized_clip,
            obs_clip: hp.obs_clip,
            action_l2_coef: hp.action_l2_coef,
            hidden: hp.hidden.clone(),
            warmup_steps: hp.warmup_steps,
            updates_per_step: hp.updates_per_step,
            q_target: "value".into(),
            timeout_terminal: hp.timeout_terminal,
            buffer_capacity: hp.buffer_capacity,
            elite_capacity: hp.elite_capacity,
            epochs: hp.epochs,
            cycles_per_epoch: hp.cycles_per_epoch,
            batches_per_cycle: hp.batches_per_cycle,
            test_rollouts: hp.test_rollouts,
            env: EnvOverrides::default(),
        }
    }
}

/// What a validated config trains.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Single { spec: TaskSpec, episodes: usize },
    Curriculum(CurriculumSpec),
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Parses `key=value`; the value is read as a TOML value, falling back to a bare string.
pub fn parse_assignment(text: &str) -> Result<(String, Value), HarnessError> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override `{text}` is not key=value")))?;
    let k = k.trim();
    let v = v.trim();
    if k.is_empty() {
        return Err(cfg_err(format!("override `{text}` has an empty key")));
    }
    let value = match format!("x = {v}").parse::<Table>() {
        Ok(mut t) => t.remove("x").expect("just inserted"),
        Err(_) => Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

/// Sets a (possibly dotted) key in a table.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> Result<(), HarnessError> {
    match key.split_once('.') {
        None => {
            table.insert(key.to_string(), value);
            Ok(())
        }
        Some((head, rest)) => {
            let entry = table
                .entry(head.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            match entry {
                Value::Table(t) => set_key(t, rest, value),
                _ => Err(cfg_err(format!("`{head}` is not a table"))),
            }
        }
    }
}

/// Configuration layers, lowest priority first.
#[derive(Debug, Clone, Default)]
pub struct ConfigLayers {
    pub files: Vec<PathBuf>,
    pub texts: Vec<String>,
    pub seed_env: Option<String>,
    pub out_dir_env: Option<String>,
    pub overrides: Vec<(String, Value)>,
}

impl ConfigLayers {
    /// Picks up `SEED` and `OUT_DIR` from the process environment.
    pub fn with_process_env(mut self) -> Self {
        self.seed_env = std::env::var("SEED").ok();
        self.out_dir_env = std::env::var("OUT_DIR").ok();
        self
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut table = Table::new();
        let mut merge = |text: &str, origin: &str| -> Result<(), HarnessError> {
            let t: Table = text
                .parse()
                .map_err(|e| cfg_err(format!("{origin}: {e}")))?;
            for (k, v) in t {
                match (table.get_mut(&k), v) {
                    (Some(Value::Table(dst)), Value::Table(src)) => dst.extend(src),
                    (_, v) => {
                        table.insert(k, v);
                    }
                }
            }
            Ok(())
        };
        for f in &self.files {
            let text = std::fs::read_to_string(f)
                .map_err(|e| cfg_err(format!("cannot read {}: {e}", f.display())))?;
            merge(&text, &f.display().to_string())?;
        }
        for t in &self.texts {
            merge(t, "inline config")?;
        }
        if let Some(s) = &self.seed_env {
            let seed: i64 = s
                .trim()
                .parse()
                .map_err(|_| cfg_err(format!("SEED=`{s}` is not an integer")))?;
            table.insert("seed".into(), Value::Integer(seed));
        }
        if let Some(d) = &self.out_dir_env {
            table.insert("out_dir".into(), Value::String(d.clone()));
        }
        for (k, v) in &self.overrides {
            set_key(&mut table, k, v.clone())?;
        }
        let cfg: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        ConfigLayers {
            texts: vec![text.to_string()],
            ..ConfigLayers::default()
        }
        .resolve()
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        ConfigLayers {
            files: vec![path.to_path_buf()],
            ..ConfigLayers::default()
        }
        .resolve()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds == 0 {
            return Err(cfg_err("seeds must be at least 1"));
        }
        if self.budget == Some(0) {
            return Err(cfg_err("budget must be positive"));
        }
        self.schedule()?;
        self.routing()?;
        self.hyperparams()
            .validate()
            .map_err(|e| cfg_err(e.to_string()))?;
        self.q_target_mode()?;
        self.plan()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, HarnessError> {
        match self.schedule.as_str() {
            "desk" => Ok(Schedule::Desk),
            "epochs" => Ok(Schedule::Epochs),
            other => Err(cfg_err(format!("schedule `{other}` is not desk or epochs"))),
        }
    }

    fn q_target_mode(&self) -> Result<QTargetMode, HarnessError> {
        match self.q_target.as_str() {
            "value" => Ok(QTargetMode::ValueTarget),
            "soft-q" => Ok(QTargetMode::SoftQ),
            other => Err(cfg_err(format!(
                "q_target `{other}` is not value or soft-q"
            ))),
        }
    }

    pub fn routing(&self) -> Result<RoutingSpec, HarnessError> {
        if !(0.0..=1.0).contains(&self.elite_fraction) {
            return Err(cfg_err("elite_fraction must lie in [0, 1]"));
        }
        let threshold = match (self.zeta_mode.as_str(), self.zeta) {
            ("auto", None) => ThresholdSpec::Auto,
            ("auto", Some(_)) => {
                return Err(cfg_err("zeta is only used with zeta_mode = \"fixed\""))
            }
            ("fixed", Some(z)) if !z.is_nan() => ThresholdSpec::Fixed(z),
            ("fixed", _) => return Err(cfg_err("zeta_mode = \"fixed\" needs a numeric zeta")),
            ("percentile", _) => {
                if !(0.0..=1.0).contains(&self.zeta_quantile) || self.zeta_window == 0 {
                    return Err(cfg_err(
                        "zeta_quantile must lie in [0, 1] and zeta_window be positive",
                    ));
                }
                ThresholdSpec::Percentile {
                    quantile: self.zeta_quantile,
                    window: self.zeta_window,
                }
            }
            (other, _) => {
                return Err(cfg_err(format!(
                    "zeta_mode `{other}` is not auto, fixed or percentile"
                )))
            }
        };
        Ok(RoutingSpec {
            threshold,
            elite_fraction: self.elite_fraction,
        })
    }

    pub fn hyperparams(&self) -> SacHyperparams {
        SacHyperparams {
            gamma: self.gamma,
            lr_value: self.lr_value,
            lr_q: self.lr_q,
            lr_policy: self.lr_policy,
            tau: self.tau,
            alpha: self.alpha,
            batch_size: self.batch_size,
            random_action_prob: self.random_action_prob,
            gaussian_noise_scale: self.gaussian_noise_scale,
            normalized_clip: self.normalized_clip,
            obs_clip: self.obs_clip,
            action_l2_coef: self.action_l2_coef,
            hidden: self.hidden.clone(),
            warmup_steps: self.warmup_steps,
            updates_per_step: self.updates_per_step,
            q_target_mode: self.q_target_mode().unwrap_or(QTargetMode::ValueTarget),
            timeout_terminal: self.timeout_terminal,
            buffer_capacity: self.buffer_capacity,
            elite_capacity: self.elite_capacity,
            epochs: self.epochs,
            cycles_per_epoch: self.cycles_per_epoch,
            batches_per_cycle: self.batches_per_cycle,
            test_rollouts: self.test_rollouts,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, HarnessError> {
        Ok(TrainConfig {
            hp: self.hyperparams(),
            schedule: self.schedule()?,
            transfer_warmup_steps: self.transfer_warmup_steps,
            share_buffers: self.share_buffers,
            hyper_updates: self.hyper_updates,
            chain_module_hyper: self.chain_module_hyper,
        })
    }

    /// Episodes for a scope of the given kind, honoring `budget` and the table-1 schedule.
    fn episodes(&self, default: usize) -> usize {
        match (self.budget, self.schedule.as_str()) {
            (Some(b), _) => b,
            (None, "epochs") => self.epochs * self.cycles_per_epoch,
            (None, _) => default,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed + i).collect()
    }

    fn spec(&self, name: &str) -> Result<TaskSpec, HarnessError> {
        let n: TaskName = name
            .parse()
            .map_err(|e: hasac_core::Error| cfg_err(e.to_string()))?;
        let mut spec = TaskSpec::standard(n);
        self.env.apply(&mut spec);
        spec.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(spec)
    }

    pub fn plan(&self) -> Result<Plan, HarnessError> {
        if let Some(t) = &self.task {
            let spec = self.spec(t)?;
            let episodes = self.episodes(if spec.is_module() {
                self.module_episodes
            } else {
                self.task_episodes
            });
            if self.algorithm == Algorithm::Hasac && spec.is_module() {
                return Err(cfg_err(format!("hasac needs a task, `{t}` is a module")));
            }
            if self.algorithm == Algorithm::Hasac {
                return Ok(Plan::Curriculum(self.curriculum_of(vec![spec])?));
            }
            return Ok(Plan::Single { spec, episodes });
        }
        if self.curriculum.is_empty() {
            return Err(cfg_err("either task or a non-empty curriculum is required"));
        }
        let specs = self
            .curriculum
            .iter()
            .map(|n| self.spec(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Plan::Curriculum(self.curriculum_of(specs)?))
    }

    fn curriculum_of(&self, specs: Vec<TaskSpec>) -> Result<CurriculumSpec, HarnessError> {
        let routing = self.routing()?;
        let mut c = CurriculumSpec::new(&[], 0, 0);
        for spec in specs {
            c.entries.push(hasac_core::hasac::CurriculumEntry {
                task: spec,
                module_episodes: self.episodes(self.module_episodes),
                task_episodes: self.episodes(self.task_episodes),
            });
        }
        c.module_routing = routing.clone();
        c.task_routing = routing;
        c.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(c)
    }
}
