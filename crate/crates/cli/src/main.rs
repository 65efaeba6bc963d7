mod error;
mod evaluate;
mod infer;
mod manifest;
mod simulate;
mod support;
mod train;

use clap::{Parser, Subcommand, ValueEnum};
use error::CliError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zsseld::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "zsseld", version, about = "Zero- and few-shot sound event localization and detection")]
struct Cli {
    /// Run configuration (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a directory for `simulate`, a file otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize labelled FOA scenes with oracle embeddings and a manifest.
    Simulate {
        /// CSV of scripted events (scene,class,onset,offset,azimuth,elevation,gain);
        /// scenes listed there use exactly these events.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Train the network on a simulated data directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue from this checkpoint (network and optimizer state).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Loss log; defaults to the checkpoint path with a `.log.csv` suffix.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Build a support set of class and noise embeddings.
    Support {
        #[arg(long, value_enum)]
        mode: SupportMode,
        /// Comma-separated class names; defaults to the catalog.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        /// Few-shot clip list (CSV `class,path`; class `_background` marks noise clips).
        #[arg(long)]
        clips: Option<PathBuf>,
        /// Shots per class: the cap for a clip list, the count when synthesizing.
        #[arg(long)]
        shots: Option<usize>,
    },
    /// Detect and localize events in a FOA recording.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        support: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        /// Relabel frames with a single detection from the clip embedding.
        #[arg(long)]
        clap_override: bool,
    },
    /// Score predictions against references.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SupportMode {
    Zero,
    Few,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut run = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        run.seed = s;
    }
    run.validate()?;
    Ok(run)
}

fn require_out(out: Option<PathBuf>, verb: &str) -> Result<PathBuf, CliError> {
    out.ok_or_else(|| CliError::Validation(format!("{verb} needs --out")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Simulate { events } => simulate::run(&cfg, &require_out(cli.out, "simulate")?, events.as_deref()),
        Command::Train { data, resume, log } => {
            let out = require_out(cli.out, "train")?;
            train::run(&cfg, &data, &out, resume.as_deref(), log.as_deref())
        }
        Command::Support {
            mode,
            classes,
            clips,
            shots,
        } => support::run(&cfg, mode, classes, clips.as_deref(), shots, &require_out(cli.out, "support")?),
        Command::Infer {
            checkpoint,
            support,
            audio,
            clap_override,
        } => infer::run(&cfg, &checkpoint, &support, &audio, clap_override, &require_out(cli.out, "infer")?),
        Command::Evaluate { pred, reference } => evaluate::run(&cfg, &pred, &reference, cli.out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
