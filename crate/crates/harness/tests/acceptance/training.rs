use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hasac_core::checkpoint::Checkpoint;
use hasac_core::env::{ACTION_DIM, OBS_DIM};
use hasac_core::hasac::run_sac_scope;
use hasac_core::metrics::{jumpstart, TrainingCurve, DEFAULT_JUMPSTART_HEAD};
use hasac_core::sac::AgentParams;
use hasac_harness::compare::compare_dirs;
use hasac_harness::config::{parse_assignment, Plan};
use hasac_harness::run::{median, run, RunArtifacts};
use hasac_harness::{ConfigLayers, ExperimentConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{check, OrFail, Outcome};

const DESK: &str = include_str!("../../../../configs/desk.toml");
const REACH: &str = include_str!("../../../../configs/reach-desk.toml");
const CURRICULUM: &str = include_str!("../../../../configs/curriculum-desk.toml");

fn config(texts: &[&str], sets: &[&str], out: &Path) -> Result<ExperimentConfig, String> {
    let mut layers = ConfigLayers {
        texts: texts.iter().map(|t| t.to_string()).collect(),
        ..ConfigLayers::default()
    };
    for s in sets {
        layers.overrides.push(parse_assignment(s).or_fail(s)?);
    }
    layers.overrides.push((
        "out_dir".into(),
        toml::Value::String(out.display().to_string()),
    ));
    layers.resolve().or_fail("config")
}

fn scratch() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().or_fail("tempdir")
}

pub fn sac_reach() -> Outcome {
    let tmp = scratch()?;
    let t = Instant::now();
    let cfg = config(&[DESK, REACH], &[], tmp.path())?;
    let art = run(&cfg, true).or_fail("run")?;
    let secs = t.elapsed();
    let mut succ: Vec<f64> = art
        .seeds
        .iter()
        .map(|s| s.task_evals[0].success_rate)
        .collect();
    let per_seed = format!("{succ:?}");
    let m = median(&mut succ);
    check(
        art.seeds.len() == 5 && m >= 0.9 && secs < Duration::from_secs(600),
        format!(
            "{} seeds x {:?} episodes, eval success per seed {per_seed}, median {m:.2} (need >= 0.90), {:.0}s",
            art.seeds.len(),
            cfg.budget,
            secs.as_secs_f64()
        ),
    )
}

fn task_curve<'a>(art: &'a RunArtifacts, seed: usize, task: usize) -> &'a TrainingCurve {
    &art.seeds[seed].task_curves[task]
}

pub fn curriculum() -> Outcome {
    let tmp = scratch()?;
    let t = Instant::now();
    let mut arts = Vec::new();
    let mut dirs = Vec::new();
    for alg in ["sac", "hasac"] {
        let dir = tmp.path().join(alg);
        let cfg = config(
            &[DESK, CURRICULUM],
            &[&format!("algorithm=\"{alg}\"")],
            &dir,
        )?;
        arts.push(run(&cfg, true).or_fail(alg)?);
        dirs.push(dir);
    }
    let secs = t.elapsed();
    let (s, h) = (&arts[0], &arts[1]);
    let seeds = s.seeds.len().min(h.seeds.len());
    let tasks = s.seeds[0].task_curves.len();
    let last = tasks - 1;
    let final_task = s.seeds[0].task_curves[last].label.scope.clone();

    let med = |f: &dyn Fn(usize) -> f64| {
        let mut v: Vec<f64> = (0..seeds).map(f).collect();
        median(&mut v)
    };
    let succ = |a: &RunArtifacts| med(&|k| a.seeds[k].task_evals[last].success_rate);
    let ret = |a: &RunArtifacts| med(&|k| a.seeds[k].task_evals[last].mean_return);
    let (hs, ss, hr, sr) = (succ(h), succ(s), ret(h), ret(s));

    let mut js = Vec::new();
    for task in 0..tasks {
        let mut v = Vec::new();
        for k in 0..seeds {
            let (hc, sc) = (task_curve(h, k, task), task_curve(s, k, task));
            let head = DEFAULT_JUMPSTART_HEAD.min(hc.len()).min(sc.len());
            v.push(jumpstart(hc, sc, head).or_fail("jumpstart")?);
        }
        js.push((task_curve(s, 0, task).label.scope.clone(), median(&mut v)));
    }
    let js_ok = js[1..].iter().all(|(_, j)| *j > 0.0);

    let cmp = compare_dirs(&dirs, 1.0).or_fail("compare")?;
    let (sm, hm) = (cmp.reward_stats[0].mean, cmp.reward_stats[1].mean);
    let detail = format!(
        "{seeds} paired seeds; {final_task} median eval success hasac {hs:.2} vs sac {ss:.2}, \
         median eval return {hr:.2} vs {sr:.2}; median jumpstart {}; \
         mean multi-task episode return hasac {hm:.2} vs sac {sm:.2} \
         (reference table: 1.1048 vs 0.4105 x10^6, ratio 2.69; not asserted, different reward scale); {:.0}s",
        js.iter().map(|(t, j)| format!("{t} {j:.2}")).collect::<Vec<_>>().join(", "),
        secs.as_secs_f64()
    );
    check(
        seeds >= 5 && hs >= ss && hr >= sr && js_ok && secs <= Duration::from_secs(45 * 60),
        detail,
    )
}

pub fn ablation() -> Outcome {
    let tmp = scratch()?;
    let common = [
        "module_episodes=3",
        "task_episodes=12",
        "seeds=2",
        "hidden=[16, 16]",
        "warmup_steps=600",
        "hyper_updates=false",
        "elite_fraction=0.0",
        "zeta_mode=\"fixed\"",
        "zeta=inf",
    ];
    let mut arts = Vec::new();
    for alg in ["sac", "hasac"] {
        let alg_set = format!("algorithm=\"{alg}\"");
        let mut sets: Vec<&str> = common.to_vec();
        sets.push(&alg_set);
        let cfg = config(&[DESK, CURRICULUM], &sets, &tmp.path().join(alg))?;
        arts.push(run(&cfg, true).or_fail(alg)?);
    }
    let mut compared = 0;
    let mut updates = 0;
    for (s, h) in arts[0].seeds.iter().zip(&arts[1].seeds) {
        for (k, (sc, hc)) in s.task_curves.iter().zip(&h.task_curves).enumerate() {
            let bits = |c: &TrainingCurve| -> Vec<(usize, u64, bool, usize)> {
                c.points()
                    .iter()
                    .map(|p| (p.episode, p.ret.to_bits(), p.success, p.env_steps))
                    .collect()
            };
            if bits(sc) != bits(hc) {
                return Err(format!("seed {} {}: curves differ", s.seed, sc.label.scope));
            }
            let (se, he) = (s.task_evals[k], h.task_evals[k]);
            if se.mean_return.to_bits() != he.mean_return.to_bits()
                || se.success_rate != he.success_rate
            {
                return Err(format!(
                    "seed {} {}: evaluations differ",
                    s.seed, sc.label.scope
                ));
            }
            compared += sc.len();
        }
        updates += s.scopes.iter().map(|x| x.gradient_steps).sum::<usize>();
    }
    check(
        updates > 0,
        format!("{compared} episodes over 2 seeds x 4 tasks bitwise equal ({updates} sac gradient steps exercised)"),
    )
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn forward_bits(
    a: &AgentParams,
    states: &Array2<f64>,
    sa: &Array2<f64>,
) -> Result<Vec<u64>, String> {
    let out = a.policy.predict(states.view()).or_fail("policy")?;
    let mut v: Vec<u64> = out
        .mu
        .iter()
        .chain(out.log_sigma.iter())
        .map(|x| x.to_bits())
        .collect();
    for net in [&a.q1, &a.q2] {
        v.extend(
            net.predict(sa.view())
                .or_fail("q")?
                .iter()
                .map(|x| x.to_bits()),
        );
    }
    for net in [&a.value, &a.value_target] {
        v.extend(
            net.predict(states.view())
                .or_fail("v")?
                .iter()
                .map(|x| x.to_bits()),
        );
    }
    Ok(v)
}

pub fn determinism() -> Outcome {
    let tmp = scratch()?;
    let small = ["hidden=[16, 16]", "warmup_steps=400", "seeds=2"];
    let runs: [(&str, Vec<&str>); 2] = [
        (
            "sac",
            vec!["algorithm=\"sac\"", "task=\"reach\"", "budget=8"],
        ),
        (
            "hasac",
            vec![
                "curriculum=[\"open-window\", \"close-drawer\"]",
                "module_episodes=3",
                "task_episodes=6",
            ],
        ),
    ];
    let mut csvs = 0;
    for (name, sets) in &runs {
        let mut all = small.to_vec();
        all.extend(sets.iter().copied());
        let (a, b) = (
            tmp.path().join(format!("{name}-a")),
            tmp.path().join(format!("{name}-b")),
        );
        run(&config(&[DESK, CURRICULUM], &all, &a)?, true).or_fail(name)?;
        run(&config(&[DESK, CURRICULUM], &all, &b)?, true).or_fail(name)?;
        let fa = files_under(&a);
        if fa != files_under(&b) {
            return Err(format!("{name}: runs wrote different file sets"));
        }
        for f in &fa {
            let is_csv = f.extension().is_some_and(|e| e == "csv");
            let is_ck = f.extension().is_some_and(|e| e == "ckpt");
            if (is_csv || is_ck) && std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
                return Err(format!(
                    "{name}: {} differs between identical runs",
                    f.display()
                ));
            }
            csvs += usize::from(is_csv);
        }
    }

    // checkpoint round trip of a trained learner
    let cfg = config(
        &[DESK],
        &[
            "algorithm=\"sac\"",
            "task=\"reach\"",
            "budget=8",
            "warmup_steps=400",
            "hidden=[16, 16]",
        ],
        tmp.path(),
    )?;
    let Plan::Single { spec, episodes } = cfg.plan().or_fail("plan")? else {
        return Err("expected a single-scope plan".into());
    };
    let (agent, _) =
        run_sac_scope(&spec, episodes, &cfg.train_config().or_fail("cfg")?, 5).or_fail("train")?;
    let mut ck = Checkpoint::new();
    ck.add_agent("agent", &agent);
    let path = tmp.path().join("agent.ckpt");
    ck.save(&path).or_fail("save")?;
    let back = Checkpoint::load(&path)
        .or_fail("load")?
        .agent("agent")
        .or_fail("agent")?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let states = Array2::from_shape_simple_fn((64, OBS_DIM), || rng.random_range(-1.0..1.0));
    let sa =
        Array2::from_shape_simple_fn((64, OBS_DIM + ACTION_DIM), || rng.random_range(-1.0..1.0));
    let same_out = forward_bits(&agent, &states, &sa)? == forward_bits(&back, &states, &sa)?;
    check(
        same_out && back == agent,
        format!("{csvs} curve CSVs and all checkpoints byte-identical across repeated runs; restored learner forward outputs bit-identical"),
    )
}
