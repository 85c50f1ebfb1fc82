//! `emogaze`: batch driver for the gaze-emotion pipeline.
//!
//! Exit status: 0 on success, 1 on a domain error (one-line diagnostic on
//! stderr), 2 on a usage error.

mod commands;
mod config;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use emogaze::io::LabelDim;
use emogaze::model::grid::Grid;

use crate::commands::Ctx;
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "emogaze", version, about = "Gaze-based emotion modelling pipeline")]
struct Cli {
    /// TOML configuration with [cohort], [effects], [detector], [regions],
    /// [sequence], [split] and [model] tables.
    #[arg(long, global = true, env = "EMOGAZE_CONFIG")]
    config: Option<PathBuf>,
    /// Run seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    overwrite: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Io {
    /// Run directory to read from.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for outputs; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Io {
    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.input.clone())
    }
}

#[derive(Args, Debug)]
struct LabelArgs {
    /// Label dimension(s) to model; all four when omitted.
    #[arg(long = "label", value_parser = parse_label)]
    labels: Vec<LabelDim>,
}

fn parse_label(s: &str) -> Result<LabelDim, String> {
    s.parse().map_err(|e: emogaze::Error| e.to_string())
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GridChoice {
    Paper,
    Extended,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort with planted effects.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect fixations and saccades; write events and pupil baselines.
    Events(Io),
    /// Build per-trial features and step sequences.
    Features(Io),
    /// Correlations and mixed models over the feature table.
    Stats(Io),
    /// Assign trials to train, validation and test.
    Split {
        #[command(flatten)]
        io: Io,
        /// Keep every participant inside a single part.
        #[arg(long)]
        by_participant: bool,
    },
    /// Train one network per label with the configured hyperparameters.
    Train {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Grid search over learning rate and dropout.
    Grid {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum, default_value = "paper")]
        grid: GridChoice,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Linear SVM baselines on stimulus and personality inputs.
    Baseline {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Score trained networks on the test split.
    Eval(Io),
    /// Rater agreement with the modal bin of each clip.
    Agreement(Io),
    /// Render result files as text tables.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let ctx = Ctx {
        config,
        seed: cli.seed,
        overwrite: cli.overwrite,
    };
    match &cli.command {
        Command::Synth { out } => commands::synth(&ctx, out),
        Command::Events(io) => commands::events(&ctx, &io.input, &io.out()),
        Command::Features(io) => commands::features(&ctx, &io.input, &io.out()),
        Command::Stats(io) => commands::stats(&ctx, &io.input, &io.out()),
        Command::Split { io, by_participant } => commands::split(&ctx, &io.input, &io.out(), *by_participant),
        Command::Train { io, labels } => commands::train_cmd(&ctx, &io.input, &io.out(), &labels.labels),
        Command::Grid { io, grid, labels } => {
            let g = match grid {
                GridChoice::Paper => Grid::paper(),
                GridChoice::Extended => Grid::extended(),
            };
            commands::grid_cmd(&ctx, &io.input, &io.out(), &g, &labels.labels)
        }
        Command::Baseline { io, labels } => commands::baseline(&ctx, &io.input, &io.out(), &labels.labels),
        Command::Eval(io) => commands::eval(&ctx, &io.input, &io.out()),
        Command::Agreement(io) => commands::agreement(&ctx, &io.input, &io.out()),
        Command::Report { input } => {
            let text = commands::report(&ctx, input)?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their source in the message
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
