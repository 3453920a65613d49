use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hasac_core::checkpoint::Checkpoint;
use hasac_harness::config::parse_assignment;
use hasac_harness::{compare, plot, run, ConfigLayers, HarnessError};

#[derive(Parser)]
#[command(
    name = "hasac",
    version,
    about = "Train and compare SAC / HASAC on the manipulation suite"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of a config and write a run directory.
    Run {
        /// TOML config files, later ones override earlier ones.
        #[arg(long = "config", short = 'c')]
        configs: Vec<PathBuf>,
        #[arg(long)]
        algorithm: Option<String>,
        /// Single task or module instead of the curriculum.
        #[arg(long)]
        task: Option<String>,
        /// Comma-separated task list.
        #[arg(long, value_delimiter = ',')]
        curriculum: Option<Vec<String>>,
        /// Number of seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// First seed (also read from SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Episodes per scope.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        schedule: Option<String>,
        /// Output directory (also read from OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Any config key, e.g. `--set alpha=0.05 --set env.grasp_radius=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Summary tables across run directories; the first is the baseline.
    Compare {
        runs: Vec<PathBuf>,
        /// Divide rewards by this in the summary table.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Also write the tables to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG learning curves and success bars from run directories.
    Plot {
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// List the tensors of a checkpoint file.
    InspectCheckpoint { path: PathBuf },
}

fn run_cmd(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Run {
            configs,
            algorithm,
            task,
            curriculum,
            seeds,
            seed,
            budget,
            schedule,
            out,
            sets,
            dry_run,
            quiet,
        } => {
            let mut layers = ConfigLayers {
                files: configs,
                ..ConfigLayers::default()
            }
            .with_process_env();
            for s in &sets {
                layers.overrides.push(parse_assignment(s)?);
            }
            let mut flag = |k: &str, v: Option<toml::Value>| {
                if let Some(v) = v {
                    layers.overrides.push((k.to_string(), v));
                }
            };
            flag("algorithm", algorithm.map(toml::Value::String));
            flag("task", task.map(toml::Value::String));
            flag(
                "curriculum",
                curriculum
                    .map(|c| toml::Value::Array(c.into_iter().map(toml::Value::String).collect())),
            );
            flag("seeds", seeds.map(|v| toml::Value::Integer(v as i64)));
            flag("seed", seed.map(|v| toml::Value::Integer(v as i64)));
            flag("budget", budget.map(|v| toml::Value::Integer(v as i64)));
            flag("schedule", schedule.map(toml::Value::String));
            flag(
                "out_dir",
                out.map(|p| toml::Value::String(p.display().to_string())),
            );
            let cfg = layers.resolve()?;
            if dry_run {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let art = run::run(&cfg, quiet)?;
            let n: usize = art.seeds.iter().map(|s| s.curves.len()).sum();
            println!(
                "wrote {n} curves for {} seed(s) to {}",
                art.seeds.len(),
                art.dir.display()
            );
            Ok(())
        }
        Cmd::Compare { runs, scale, out } => {
            let c = compare::compare_dirs(&runs, scale)?;
            let text = c.render();
            print!("{text}");
            if let Some(p) = out {
                std::fs::write(p, text)?;
            }
            Ok(())
        }
        Cmd::Plot { runs, out } => {
            if runs.is_empty() {
                eprintln!("warning: no run directories given, nothing to plot");
                return Ok(());
            }
            for p in plot::emit_plots(&runs, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Cmd::InspectCheckpoint { path } => {
            let ck = Checkpoint::load(&path)?;
            println!(
                "{}: format version {}",
                path.display(),
                hasac_core::checkpoint::FORMAT_VERSION
            );
            for (name, shape) in ck.manifest() {
                println!("  {name:<40} {shape:?}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run_cmd(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hasac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
