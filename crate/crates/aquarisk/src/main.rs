use std::path::PathBuf;
use std::process::ExitCode;

use aquarisk::config::PipelineConfig;
use aquarisk::pipeline::{self, Command, Context};
use aquarisk::{AppError, Result};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aquarisk", version, about = "Lead service-line risk pipeline")]
struct Cli {
    /// Pipeline config (TOML). Without it every setting takes its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Artifact directory.
    #[arg(long, global = true, env = "AQUARISK_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Parse, merge and encode the source datasets.
    Ingest,
    /// Fit the lead model and the submission-propensity model.
    Train,
    /// Repeated grouped cross-validation of the lead model.
    Evaluate,
    /// Calibrated probabilities for every occupied parcel.
    Predict,
    /// Top-k untested parcels by predicted risk.
    Rank,
    /// Monthly 90th-percentile series, weighted and unweighted.
    Series,
    /// Generate a synthetic city with ground truth.
    Synth,
    /// Attribute quartiles by submission count.
    Quartiles,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Predict => Command::Predict,
            Cmd::Rank => Command::Rank,
            Cmd::Series => Command::Series,
            Cmd::Synth => Command::Synth,
            Cmd::Quartiles => Command::Quartiles,
        }
    }
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| {
            AppError::Config(
                "no output directory: pass --out, set AQUARISK_OUT or `out` in the config".into(),
            )
        })?;
    let ctx = Context::new(config, out, cli.threads)?;
    pipeline::run(cli.command.into(), &ctx)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("aquarisk: error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
