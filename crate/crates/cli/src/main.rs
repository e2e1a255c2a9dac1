//! `cooper` — command-line driver for the desk-scale training laboratory.
//!
//! Grammar: `cooper <codec|flow|curate|sft|grpo|eval|report> [subcommand]
//! --config PATH [--seed N] [--out DIR] [stage flags]`. Pipeline stages
//! communicate only through files in the output directory, so every command
//! is independently runnable, and identical config and seed produce
//! byte-identical artifacts.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
//! The `COOPER_LOG` environment variable sets the log level.

mod commands;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cooper_core::config::RunConfig;

use crate::commands::flow::Control;
use crate::workspace::Workspace;

#[derive(Parser)]
#[command(
    name = "cooper",
    version,
    about = "Auxiliary-modality reasoning laboratory: codecs, flow generation, \
             curation, and policy optimization at desk scale"
)]
struct Cli {
    /// Run configuration TOML; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run seed; overrides the config file value.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory; overrides the config file value.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Round depth maps and segmentation masks through the raster codecs.
    #[command(subcommand)]
    Codec(CodecCmd),
    /// Train the conditional velocity field or sample an auxiliary view.
    #[command(subcommand)]
    Flow(FlowCmd),
    /// Probe the base policy and split items by measured visual gain.
    Curate,
    /// Warm-start the policy on demonstrations from the supervised split.
    Sft,
    /// Optimize the warm-started policy with group-relative updates.
    Grpo,
    /// Replay a policy checkpoint over the curated items and score it.
    Eval {
        /// Policy checkpoint to evaluate (default: the grpo checkpoint).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Summarize a finished run as one JSON file with a stable schema.
    Report,
}

#[derive(Subcommand)]
enum CodecCmd {
    /// 16-bit depth PGM -> percentile-normalized pseudo-image PGM.
    EncodeDepth(InOut),
    /// Pseudo-image PGM -> normalized depth PGM (values in [0, 1]).
    DecodeDepth(InOut),
    /// Label mask JSON -> palette pseudo-image PPM.
    EncodeSeg(InOut),
    /// Palette pseudo-image PPM -> label mask JSON.
    DecodeSeg(InOut),
}

#[derive(Args)]
struct InOut {
    /// File to read.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,

    /// File to write.
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum FlowCmd {
    /// Fit the velocity field to (condition, target) pairs.
    Train {
        /// Pair dataset JSONL; defaults to pairs.jsonl in the output
        /// directory, materializing the built-in demo set when absent.
        #[arg(long, value_name = "PATH")]
        pairs: Option<PathBuf>,
    },
    /// Integrate one latent from noise under a task condition.
    Sample {
        /// Which modality tag conditions the generation.
        #[arg(long, value_enum)]
        control: Control,
        /// Integration step count; defaults to the config solver setting.
        #[arg(short = 'T', long, value_name = "STEPS")]
        steps: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COOPER_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> cooper_core::Result<()> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.with_overrides(cli.seed, cli.out.map(|p| p.display().to_string()));
    cfg.validate()?;
    let ws = Workspace::new(&cfg.out_dir);

    match cli.command {
        Command::Codec(cmd) => match cmd {
            CodecCmd::EncodeDepth(io) => commands::codec::encode_depth(&io.input, &io.output),
            CodecCmd::DecodeDepth(io) => commands::codec::decode_depth(&io.input, &io.output),
            CodecCmd::EncodeSeg(io) => commands::codec::encode_seg(&cfg, &io.input, &io.output),
            CodecCmd::DecodeSeg(io) => commands::codec::decode_seg(&cfg, &io.input, &io.output),
        },
        Command::Flow(cmd) => match cmd {
            FlowCmd::Train { pairs } => commands::flow::train(&cfg, &ws, pairs.as_deref()),
            FlowCmd::Sample { control, steps } => commands::flow::sample(&cfg, &ws, control, steps),
        },
        Command::Curate => commands::curate::run(&cfg, &ws),
        Command::Sft => commands::sft::run(&cfg, &ws),
        Command::Grpo => commands::grpo::run(&cfg, &ws),
        Command::Eval { checkpoint } => commands::eval::run(&cfg, &ws, checkpoint.as_deref()),
        Command::Report => commands::report::run(&cfg, &ws),
    }
}
