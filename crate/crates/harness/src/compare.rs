//! `compare`: reward summary table, per-task success rates and paired-seed
//! transfer metrics across finished run directories. The first run is the
//! baseline every other run is measured against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hasac_core::metrics::{
    asymptotic_performance, format_reward_row, jumpstart, reward_table_header, summary_of,
    time_to_threshold, transfer_ratio, SummaryStats, TrainingCurve, DEFAULT_ASYMPTOTE_TAIL,
    DEFAULT_JUMPSTART_HEAD, DEFAULT_SMOOTHING_WINDOW,
};

use crate::curves::load_dir;
use crate::run::{median, ScopeSummary, CONFIG_FILE, METRICS_FILE};
use crate::{HarnessError, Result};

/// One seed of a loaded run: task-level curves plus final evaluation success.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub tasks: Vec<TrainingCurve>,
    pub eval_success: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub name: String,
    pub seeds: BTreeMap<u64, SeedData>,
}

impl LoadedRun {
    /// Task scopes in order of first appearance.
    pub fn task_scopes(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in self.seeds.values() {
            for c in &s.tasks {
                if seen.insert(c.label.scope.clone()) {
                    out.push(c.label.scope.clone());
                }
            }
        }
        out
    }

    fn curve(&self, seed: u64, scope: &str) -> Option<&TrainingCurve> {
        self.seeds
            .get(&seed)?
            .tasks
            .iter()
            .find(|c| c.label.scope == scope)
    }
}

fn is_task_scope(scope: &str) -> bool {
    !scope.contains('/')
}

/// Reads a run directory written by `run`.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    if !dir.join(CONFIG_FILE).is_file() {
        return Err(HarnessError::Data(format!(
            "{} is not a run directory (no {CONFIG_FILE})",
            dir.display()
        )));
    }
    let mut seed_dirs: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let seed = name.strip_prefix("seed-")?.parse().ok()?;
            Some((seed, e.path()))
        })
        .collect();
    seed_dirs.sort();
    let mut seeds = BTreeMap::new();
    for (seed, sd) in seed_dirs {
        let mut tasks: Vec<TrainingCurve> = load_dir(&sd.join("curves"))?
            .into_iter()
            .filter(|c| is_task_scope(&c.label.scope))
            .collect();
        let mut eval_success = BTreeMap::new();
        let mut order = Vec::new();
        if let Ok(text) = std::fs::read_to_string(sd.join(METRICS_FILE)) {
            let scopes: Vec<ScopeSummary> = serde_json::from_str(&text).map_err(|e| {
                HarnessError::Data(format!("{}: {e}", sd.join(METRICS_FILE).display()))
            })?;
            for s in scopes {
                order.push(s.scope.clone());
                eval_success.insert(s.scope, s.eval_success_rate);
            }
        }
        // curriculum order from the metrics file, not file-name order
        tasks.sort_by_key(|c| {
            order
                .iter()
                .position(|s| *s == c.label.scope)
                .unwrap_or(usize::MAX)
        });
        seeds.insert(
            seed,
            SeedData {
                tasks,
                eval_success,
            },
        );
    }
    if seeds.is_empty() {
        return Err(HarnessError::Data(format!(
            "{}: no seed directories",
            dir.display()
        )));
    }
    Ok(LoadedRun {
        name: dir.display().to_string(),
        seeds,
    })
}

/// Per-episode return averaged over every task curve of every seed.
pub fn multi_task_returns(run: &LoadedRun) -> Vec<f64> {
    let curves: Vec<&TrainingCurve> = run.seeds.values().flat_map(|s| &s.tasks).collect();
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| curves.iter().map(|c| c.points()[i].ret).sum::<f64>() / curves.len() as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuccess {
    pub scope: String,
    /// Median over seeds of final-evaluation success, one entry per run.
    pub eval: Vec<f64>,
    /// Mean over seeds of the training success rate, one entry per run.
    pub train: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub scope: String,
    pub run: String,
    pub paired_seeds: usize,
    pub jumpstart: f64,
    pub transfer_ratio: f64,
    pub asymptote_gain: f64,
    pub time_to_threshold: Option<f64>,
    pub baseline_time_to_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<String>,
    pub reward_stats: Vec<SummaryStats>,
    pub success: Vec<TaskSuccess>,
    pub transfer: Vec<TransferRow>,
    pub scale: f64,
}

fn median_opt(mut v: Vec<f64>) -> Option<f64> {
    (!v.is_empty()).then(|| median(&mut v))
}

pub fn compare_runs(runs: &[LoadedRun], scale: f64) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(HarnessError::Config(
            "compare needs at least two runs".into(),
        ));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(HarnessError::Config("scale must be positive".into()));
    }
    let scopes = runs[0].task_scopes();
    for r in &runs[1..] {
        let other = r.task_scopes();
        if other.iter().collect::<BTreeSet<_>>() != scopes.iter().collect::<BTreeSet<_>>() {
            return Err(HarnessError::Config(format!(
                "mismatched curricula: {} has [{}], {} has [{}]",
                runs[0].name,
                scopes.join(", "),
                r.name,
                other.join(", ")
            )));
        }
    }

    let mut reward_stats = Vec::new();
    for r in runs {
        let v = multi_task_returns(r);
        reward_stats
            .push(summary_of(&v).map_err(|e| HarnessError::Data(format!("{}: {e}", r.name)))?);
    }

    let mut success = Vec::new();
    for scope in &scopes {
        let mut eval = Vec::new();
        let mut train = Vec::new();
        for r in runs {
            let e: Vec<f64> = r
                .seeds
                .values()
                .filter_map(|s| s.eval_success.get(scope).copied())
                .collect();
            eval.push(median_opt(e).unwrap_or(f64::NAN));
            let t: Vec<f64> = r
                .seeds
                .keys()
                .filter_map(|&seed| r.curve(seed, scope))
                .map(|c| c.points().iter().filter(|p| p.success).count() as f64 / c.len() as f64)
                .collect();
            train.push(if t.is_empty() {
                f64::NAN
            } else {
                t.iter().sum::<f64>() / t.len() as f64
            });
        }
        success.push(TaskSuccess {
            scope: scope.clone(),
            eval,
            train,
        });
    }

    let base = &runs[0];
    let mut transfer = Vec::new();
    for r in &runs[1..] {
        for scope in &scopes {
            let mut js = Vec::new();
            let mut tr = Vec::new();
            let mut gain = Vec::new();
            let mut ttt = Vec::new();
            let mut base_ttt = Vec::new();
            for (&seed, _) in &r.seeds {
                let (Some(t), Some(b)) = (r.curve(seed, scope), base.curve(seed, scope)) else {
                    continue;
                };
                let head = DEFAULT_JUMPSTART_HEAD.min(t.len()).min(b.len());
                js.push(jumpstart(t, b, head)?);
                if let Ok(x) = transfer_ratio(t, b) {
                    tr.push(x);
                }
                let tail = |c: &TrainingCurve| DEFAULT_ASYMPTOTE_TAIL.min(c.len());
                let b_asym = asymptotic_performance(b, tail(b))?;
                gain.push(asymptotic_performance(t, tail(t))? - b_asym);
                if let Some(x) = time_to_threshold(t, b_asym, DEFAULT_SMOOTHING_WINDOW) {
                    ttt.push(x as f64);
                }
                if let Some(x) = time_to_threshold(b, b_asym, DEFAULT_SMOOTHING_WINDOW) {
                    base_ttt.push(x as f64);
                }
            }
            if js.is_empty() {
                return Err(HarnessError::Data(format!(
                    "{} and {} share no seeds for {scope}",
                    base.name, r.name
                )));
            }
            transfer.push(TransferRow {
                scope: scope.clone(),
                run: r.name.clone(),
                paired_seeds: js.len(),
                jumpstart: median_opt(js).unwrap(),
                transfer_ratio: median_opt(tr).unwrap_or(f64::NAN),
                asymptote_gain: median_opt(gain).unwrap(),
                time_to_threshold: median_opt(ttt),
                baseline_time_to_threshold: median_opt(base_ttt),
            });
        }
    }
    Ok(Comparison {
        runs: runs.iter().map(|r| r.name.clone()).collect(),
        reward_stats,
        success,
        transfer,
        scale,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

impl Comparison {
    /// Markdown rendering of all three tables.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("## Reward summary (multi-task, per episode)\n\n");
        s.push_str(&reward_table_header(self.scale));
        s.push('\n');
        s.push_str("|---|---|---|---|---|\n");
        for (name, st) in self.runs.iter().zip(&self.reward_stats) {
            s.push_str(&format_reward_row(name, st, self.scale));
            s.push('\n');
        }

        s.push_str("\n## Success rate (eval median over seeds / training mean)\n\n| task |");
        for r in &self.runs {
            let _ = write!(s, " {r} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.runs.len()));
        s.push('\n');
        let mut eval_sum = vec![0.0; self.runs.len()];
        let mut train_sum = vec![0.0; self.runs.len()];
        for row in &self.success {
            let _ = write!(s, "| {} |", row.scope);
            for (k, (e, t)) in row.eval.iter().zip(&row.train).enumerate() {
                let _ = write!(s, " {e:.2} / {t:.2} |");
                eval_sum[k] += e;
                train_sum[k] += t;
            }
            s.push('\n');
        }
        let n = self.success.len().max(1) as f64;
        s.push_str("| multi-task |");
        for (e, t) in eval_sum.iter().zip(&train_sum) {
            let _ = write!(s, " {:.2} / {:.2} |", e / n, t / n);
        }
        s.push('\n');

        if !self.transfer.is_empty() {
            let _ = write!(
                s,
                "\n## Transfer metrics against {} (median over paired seeds)\n\n",
                self.runs[0]
            );
            s.push_str("| task | run | seeds | jumpstart | transfer ratio | asymptote gain | time to threshold | baseline time |\n");
            s.push_str("|---|---|---|---|---|---|---|---|\n");
            for t in &self.transfer {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {} | {} |",
                    t.scope,
                    t.run,
                    t.paired_seeds,
                    t.jumpstart,
                    t.transfer_ratio,
                    t.asymptote_gain,
                    opt(t.time_to_threshold),
                    opt(t.baseline_time_to_threshold)
                );
            }
        }
        s
    }
}

pub fn compare_dirs(dirs: &[PathBuf], scale: f64) -> Result<Comparison> {
    let runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;
    compare_runs(&runs, scale)
}
