//! `kes`: batch front end over `kes-core`.
//!
//! Exit codes: 0 success, 1 tolerance failure or internal error, 2 bad input
//! or configuration.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kes_core::config::RunConfig;
use kes_core::{KesError, Result};

#[derive(Parser)]
#[command(name = "kes", version, about = "Knowledge-graph augmented entailment")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the graph and node embeddings and print counts and coverage.
    BuildGraph,
    /// Print the contextual subgraph of one premise/hypothesis pair.
    Extract { premise: String, hypothesis: String },
    /// Average new nodes and edges per example at every theta of the grid.
    Stats {
        /// Dataset to measure; defaults to `train_data`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train on `train_data`, select on `dev_data`, save the best epoch.
    Train {
        /// Checkpoint path; defaults to `checkpoint_dir/model.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy and confusion counts of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset to score; defaults to `test_data`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Label and class probabilities for one pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        premise: String,
        hypothesis: String,
    },
    /// Finite-difference gradient check on random tiny models.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        models: usize,
    },
    /// Train and evaluate once per theta of `theta_grid`.
    Sweep,
    /// Write a synthetic corpus whose labels depend only on graph connectivity,
    /// plus a config file pointing at it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3200)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        dev: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 2)]
        max_leaves: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
}

fn resolve_config(shared: &Shared) -> Result<RunConfig> {
    let mut cfg = match &shared.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &shared.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| KesError::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v).map_err(KesError::Config)?;
    }
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if let Some(t) = shared.theta {
        cfg.theta = t;
    }
    if let Some(j) = shared.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve_config(&cli.shared)?;
    match cli.command {
        Command::BuildGraph => commands::build_graph(&cfg),
        Command::Extract { premise, hypothesis } => commands::extract(&cfg, &premise, &hypothesis),
        Command::Stats { data } => commands::stats(&cfg, data),
        Command::Train { out } => commands::train(&cfg, out),
        Command::Eval { checkpoint, data } => commands::eval(&cfg, &checkpoint, data),
        Command::Predict {
            checkpoint,
            premise,
            hypothesis,
        } => commands::predict(&cfg, &checkpoint, &premise, &hypothesis),
        Command::Gradcheck { models } => commands::gradcheck(&cfg, models),
        Command::Sweep => commands::sweep(&cfg),
        Command::Synth {
            out,
            train,
            dev,
            test,
            max_leaves,
            dim,
        } => commands::synth(&cfg, &out, [train, dev, test], max_leaves, dim),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
