use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

mod commands;
mod config;
mod setup;

use commands::{analyze, evaluate, gen_data, param_count, profile, sweep, train, translate};
use config::Usage;

/// Encoder-decoder Transformers with learned or hard-coded attention.
#[derive(Parser)]
#[command(name = "hcattn", version)]
struct Cli {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Only print warnings and errors
    #[arg(short, long, global = true, action = ArgAction::SetTrue)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus with train/dev/test splits
    GenData(gen_data::Flags),
    /// Train a model and write its checkpoint and metrics
    Train(train::Flags),
    /// Greedy-decode sentences with a trained model
    Translate(translate::Flags),
    /// BLEU, loss and token accuracy on a split, plus contrastive scoring
    Evaluate(evaluate::Flags),
    /// Attention locality, off-diagonality and binned BLEU deltas
    Analyze(analyze::Flags),
    /// Largest batch under a memory budget and decoding throughput per preset
    Profile(profile::Flags),
    /// Train every hard-coded self-attention configuration of a grid
    Sweep(sweep::Flags),
    /// Parameter count with a per-site breakdown
    ParamCount(param_count::Flags),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .parse_env("RUST_LOG")
        .format_target(false)
        .init();

    let file = cli.config.as_deref();
    let result = match &cli.command {
        Command::GenData(f) => gen_data::run(file, f),
        Command::Train(f) => train::run(file, f),
        Command::Translate(f) => translate::run(file, f),
        Command::Evaluate(f) => evaluate::run(file, f),
        Command::Analyze(f) => analyze::run(file, f),
        Command::Profile(f) => profile::run(file, f),
        Command::Sweep(f) => sweep::run(file, f),
        Command::ParamCount(f) => param_count::run(file, f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
