use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use lazyabc::sampler::CostMode;

mod commands;
mod config;
mod data;
mod report;
mod workspace;

use config::{Loaded, Overrides};

/// Lazy ABC experiment runner.
#[derive(Parser, Debug)]
#[command(name = "lazyabc", version, about)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, overriding the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// How stage costs are measured, overriding the config.
    #[arg(long, global = true, value_parser = ["wall", "cpu", "sim"])]
    cost_mode: Option<String>,
    /// Overwrite existing observed data.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an observed dataset at the configured true parameters.
    SimulateData,
    /// Pilot ABC-IS run recording everything tuning needs.
    Pilot,
    /// Fit the continuation policy from the pilot.
    Tune,
    /// Main ABC-IS or lazy ABC run.
    Run,
    /// Lower the acceptance threshold of a finished run.
    PosthocEpsilon {
        run_dir: PathBuf,
        #[arg(long, conflicts_with = "accept_count")]
        epsilon: Option<f64>,
        /// Keep exactly this many acceptances.
        #[arg(long)]
        accept_count: Option<usize>,
        /// Output directory; defaults to a sibling of RUN_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append a main run to its pilot.
    Combine {
        pilot_dir: PathBuf,
        main_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Comparison table and plot data for one or more runs.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn loaded(cli: &Cli) -> Result<Loaded> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs --config PATH"))?;
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        cost_mode: cli
            .cost_mode
            .as_deref()
            .map(|m| m.parse::<CostMode>())
            .transpose()
            .map_err(|e| anyhow!(e))?,
    };
    config::load(path, &overrides)
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::SimulateData => {
            let l = loaded(cli)?;
            Ok(data::simulate_data(&l, cli.force)?
                .into_iter()
                .map(PathBuf::from)
                .collect())
        }
        Command::Pilot => commands::pilot(&loaded(cli)?),
        Command::Tune => commands::tune(&loaded(cli)?),
        Command::Run => commands::run(&loaded(cli)?),
        Command::PosthocEpsilon {
            run_dir,
            epsilon,
            accept_count,
            out,
        } => commands::posthoc(run_dir, *epsilon, *accept_count, out.clone()),
        Command::Combine {
            pilot_dir,
            main_dir,
            out,
        } => commands::combine(pilot_dir, main_dir, out),
        Command::Report { run_dirs, out } => report::report(run_dirs, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
