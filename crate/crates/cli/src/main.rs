use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdlp_core::enhancer::ScalePreset;

mod commands;
mod config;
mod error;
mod manifest;

use config::{Overrides, RunConfig};
use error::CliError;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  2  invalid argument or configuration
  3  I/O or malformed file
  4  numeric failure
  5  one or more verify checks failed
  6  one or more batch inputs failed (the rest were processed)";

const MANIFEST_HELP: &str = "\
The manifest is tab-separated text, one pair per line, '#' starts a comment:
  clean_path  reverb_path  t60  direct_delay  seed
Relative paths are relative to the manifest's directory.";

/// FDLP sub-band envelope extraction and dereverberation.
#[derive(Debug, Parser)]
#[command(name = "fdlp-dereverb", version, after_help = EXIT_HELP)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Enhancer size preset: full or desk.
    #[arg(long, global = true)]
    scale: Option<ScalePreset>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Feature file format: binary or csv.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Also write the predicted gains next to enhanced envelopes.
    #[arg(long, global = true)]
    gain_dump: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reverberate clean WAVs (or synthetic signals) and write a manifest.
    #[command(after_help = MANIFEST_HELP)]
    Simulate {
        /// Clean WAV files; omit to use simulate.synthetic generated signals.
        clean: Vec<PathBuf>,
    },
    /// Write one FDLPENVL envelope dump per WAV.
    Extract {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train the gain predictor on a manifest.
    #[command(after_help = MANIFEST_HELP)]
    Train {
        manifest: PathBuf,
        /// With --epochs 0, write a checkpoint whose gains are exactly 1.
        #[arg(long)]
        zero_final_layer: bool,
    },
    /// Apply a checkpoint to envelope dumps.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Turn envelope dumps into frame-level log features.
    Featurize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run the numerical and modelling checks; with a checkpoint, also the
    /// held-out enhancement metric.
    Verify {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let flags = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        scale: cli.scale,
        epochs: cli.epochs,
        output: cli.output,
        format: cli.format,
        gain_dump: cli.gain_dump,
    };
    let config = RunConfig::load(cli.config.as_deref(), &flags)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("worker pool: {e}")))?;
    match &cli.command {
        Command::Simulate { clean } => commands::simulate(&config, clean),
        Command::Extract { inputs } => commands::extract(&config, inputs),
        Command::Train {
            manifest,
            zero_final_layer,
        } => commands::train_cmd(&config, manifest, *zero_final_layer),
        Command::Enhance { checkpoint, inputs } => commands::enhance(&config, checkpoint, inputs),
        Command::Featurize { inputs } => commands::featurize(&config, inputs),
        Command::Verify { checkpoint } => commands::verify_cmd(&config, checkpoint.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fdlp-dereverb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
