mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use aavit::data::SplitCounts;

use commands::{Granularity, SynthArgs};
use failure::CliResult;

#[derive(Parser)]
#[command(
    name = "aavit",
    version,
    about = "Face anti-spoofing with adaptive-pooling vision transformers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by commands that build a run configuration.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration (`{"model": {...}, "train": {...}}`) or a previous run.json
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for both initialization and data order
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override, e.g. `--set train.lr=0.001`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic real/attack corpus and its manifest
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Images per class in every split, unless overridden per split
        #[arg(long, default_value_t = 32)]
        per_class: usize,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        dev: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long, default_value_t = 32)]
        image_size: usize,
        #[arg(long, default_value_t = 2)]
        frames_per_video: usize,
    },
    /// Train a model on the manifest's train split
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score dev and test splits with a checkpoint and report EER
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Granularity::Frame)]
        granularity: Granularity,
    },
    /// Build an EER report from score files
    Report {
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value = "AAViT")]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and compare the three head variants under one seed
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            per_class,
            train,
            dev,
            test,
            image_size,
            frames_per_video,
        } => commands::run_synth(&SynthArgs {
            out,
            counts: SplitCounts {
                train: train.unwrap_or(per_class),
                dev: dev.unwrap_or(per_class),
                test: test.unwrap_or(per_class),
            },
            image_size,
            frames_per_video,
            seed,
        }),
        Command::Train { cfg, manifest, out } => {
            let run_cfg = commands::load_config(cfg.config.as_deref(), cfg.seed, &cfg.overrides)?;
            commands::run_train(&run_cfg, &manifest, &out)
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
            granularity,
        } => commands::run_eval(&checkpoint, &manifest, &out, granularity),
        Command::Report { dev, test, model, out } => {
            commands::run_report(dev.as_deref(), test.as_deref(), &model, out.as_deref())
        }
        Command::Ablate { cfg, manifest, out } => {
            let run_cfg = commands::load_config(cfg.config.as_deref(), cfg.seed, &cfg.overrides)?;
            commands::run_ablation(&run_cfg, &manifest, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{f}");
            ExitCode::from(f.code)
        }
    }
}
