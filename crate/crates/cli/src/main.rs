//! `flaicf`: prepare data, train, evaluate, check gradients and export
//! attention weights for attentive item-based CF models.

mod commands;
mod error;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::run_config::RunConfig;

#[derive(Parser)]
#[command(name = "flaicf", version, about = "Attentive item-based collaborative filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat `key=value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-key overrides, e.g. `--beta 0.5 --d 16`. Numeric keys given to
    /// `train` accept comma lists, expanded to a grid of runs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        // `--config` may also appear after the first override.
        let mut config = self.config.clone();
        let mut overrides = Vec::with_capacity(self.overrides.len());
        let mut it = self.overrides.iter();
        while let Some(arg) = it.next() {
            if arg == "--config" {
                config = it.next().map(PathBuf::from);
            } else if let Some(path) = arg.strip_prefix("--config=") {
                config = Some(PathBuf::from(path));
            } else {
                overrides.push(arg.clone());
            }
        }
        RunConfig::load(config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw interaction file, apply k-core filtering and split per user.
    Prepare(RunArgs),
    /// Train a model (optionally FISM-pretrained) and write its checkpoint and metrics.
    Train(RunArgs),
    /// Compute HR@n / NDCG@n for a checkpoint or a baseline.
    Evaluate(RunArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(RunArgs),
    /// Write item- and feature-level attention weights as CSV.
    ExportAttention(RunArgs),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => commands::prepare(&a.load()?),
        Command::Train(a) => commands::train(&a.load()?),
        Command::Evaluate(a) => commands::evaluate_cmd(&a.load()?),
        Command::Gradcheck(a) => commands::gradcheck_cmd(&a.load()?),
        Command::ExportAttention(a) => commands::export_attention(&a.load()?).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error category={}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
