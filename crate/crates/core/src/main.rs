use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use statpool::experiment::{run_stage, ExperimentConfig, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Synth,
    Train,
    Extract,
    Score,
    Eval,
    Fuse,
    Probe,
    Report,
    Run,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Train => Stage::Train,
            Command::Extract => Stage::Extract,
            Command::Score => Stage::Score,
            Command::Eval => Stage::Eval,
            Command::Fuse => Stage::Fuse,
            Command::Probe => Stage::Probe,
            Command::Report => Stage::Report,
            Command::Run => Stage::Run,
        }
    }
}

/// Pooling-statistics experiments on a synthetic speaker corpus.
#[derive(Debug, Parser)]
#[command(name = "statpool", version)]
struct Cli {
    /// Pipeline stage to execute; `run` executes all of them.
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config (optional for `report`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of the configured systems.
    #[arg(long, value_delimiter = ',')]
    systems: Option<Vec<String>>,
}

fn execute(cli: Cli) -> statpool::Result<Option<String>> {
    let stage = cli.command.stage();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if matches!(stage, Stage::Report) => ExperimentConfig::default(),
        None => {
            return Err(statpool::Error::InvalidConfig(format!(
                "`{stage}` needs --config <path>"
            )))
        }
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(names) = &cli.systems {
        cfg.restrict(names)?;
    }
    if !matches!(stage, Stage::Report) {
        std::fs::create_dir_all(&cfg.out_dir)?;
    }
    run_stage(stage, &cfg, &cfg.out_dir)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(text) => {
            if let Some(text) = text {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
