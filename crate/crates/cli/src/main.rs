use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use horizon_cli::cache::CACHE_ENV;
use horizon_cli::config::{LockEnv, MazeEnv, OracleDumpConfig, RunConfig};
use horizon_cli::runner::{lock_dataset, maze_dataset, maze_spec, oracle_csv};
use horizon_cli::{run, sweep, RunOptions};
use horizon_core::data::write_dataset;
use horizon_core::envs::{layout_text, LockSpec};
use horizon_core::eval::write_atomic;
use horizon_core::nn::{grad_check, LossDescriptor};

#[derive(Parser)]
#[command(name = "horizon", version, about = "Horizon-reduction experiments on a lock and a point maze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir` or `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Run this single seed instead of the config's list.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every seed of a config.
    Run(RunArgs),
    /// Run the cross product declared in the config's [sweep] section.
    Sweep(RunArgs),
    /// Finite-difference check of every training loss.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Print a built-in maze layout.
    DumpLayout { id: String },
    /// Print the exact oracle for a lock horizon or a maze layout.
    DumpOracle {
        #[arg(long, conflicts_with = "layout")]
        horizon: Option<usize>,
        #[arg(long)]
        layout: Option<String>,
        #[arg(long, default_value_t = 0)]
        env_seed: u64,
    },
    /// Generate the dataset a config trains on and write it to a file.
    DatasetGen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn options(a: &RunArgs) -> RunOptions {
    RunOptions {
        out: a.out.clone(),
        workers: a.workers,
        seed_override: a.seed_override,
        cache_dir: std::env::var_os(CACHE_ENV).map(PathBuf::from),
    }
}

fn main_inner(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let report = run(&cfg, &options(&a))?;
            println!("{} runs written to {}", report.runs.len(), report.out_dir.display());
        }
        Command::Sweep(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let report = sweep(&cfg, &options(&a))?;
            println!("{} groups written to {}", report.groups.len(), report.out_dir.display());
        }
        Command::GradCheck { seed, tolerance } => {
            let mut worst = 0.0f64;
            for desc in LossDescriptor::ALL {
                let err = grad_check(desc, seed)?;
                worst = worst.max(err);
                let verdict = if err < tolerance { "ok" } else { "FAIL" };
                println!("{:<17} max_rel_error {err:.3e} {verdict}", desc.name());
            }
            if !(worst < tolerance) {
                return Err(horizon_core::Error::NonFinite("gradient check above tolerance").into());
            }
        }
        Command::DumpLayout { id } => {
            for line in layout_text(&id)? {
                println!("{line}");
            }
        }
        Command::DumpOracle { horizon, layout, env_seed } => {
            let cfg = match (horizon, layout) {
                (Some(h), None) => {
                    LockSpec::new(h, env_seed)?;
                    OracleDumpConfig {
                        lock: Some(LockEnv { horizon: h, seed: env_seed }),
                        ..Default::default()
                    }
                }
                (None, Some(layout)) => OracleDumpConfig {
                    maze: Some(MazeEnv {
                        layout,
                        seed: env_seed,
                        max_episode_steps: 400,
                    }),
                    ..Default::default()
                },
                _ => bail!(horizon_core::Error::config("dump-oracle", "pass --horizon or --layout")),
            };
            print!("{}", oracle_csv(&cfg)?);
        }
        Command::DatasetGen { config, out, seed_override } => {
            let cfg = RunConfig::load(&config)?;
            let seed = seed_override.unwrap_or(cfg.seeds()[0]);
            let ds = match &cfg {
                RunConfig::LockDqn(c) => lock_dataset(c, &LockSpec::new(c.env.horizon, c.env.seed)?, seed, None)?,
                RunConfig::MazeAgents(c) => maze_dataset(c, &maze_spec(c)?, seed, None)?,
                _ => bail!(horizon_core::Error::config("kind", "dataset-gen needs a lock-dqn or maze-agents config")),
            };
            let mut bytes = Vec::new();
            write_dataset(&ds, &mut bytes).with_context(|| format!("encoding dataset for {}", out.display()))?;
            write_atomic(&out, &bytes)?;
            println!("{} transitions written to {}", ds.num_transitions(), out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<horizon_core::Error>() {
        Some(core) => core.exit_code() as u8,
        None if e.downcast_ref::<std::io::Error>().is_some() => 4,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
