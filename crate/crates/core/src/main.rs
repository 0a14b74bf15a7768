//! Thin command-line front end; all functionality lives in the library.

use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use wearmocap::cli;
use wearmocap::config::RunConfig;
use wearmocap::pipeline::EvalMode;

#[derive(Parser)]
#[command(
    name = "wearmocap",
    about = "Wearable-sensor motion capture: synthesis, alignment, training, evaluation"
)]
struct Args {
    /// Path to a run-config JSON file (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory with a checksummed manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate clock offsets from the gesture segments and emit corrected
    /// streams plus shared-grid bundles.
    Align {
        /// Dataset directory produced by `synth`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dense-sensor teacher on an aligned dataset.
    TrainTeacher {
        /// Aligned dataset directory produced by `align`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill the teacher into the sparse-sensor student.
    Distill {
        #[arg(long)]
        data: PathBuf,
        /// Teacher checkpoint file.
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint file to evaluate.
        #[arg(long)]
        ckpt: PathBuf,
        /// full | imu_only | cams_only | drop_<site> | occlude_cams_<frac>
        #[arg(long, default_value = "full")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the barrier-synchronized capture simulator and verify its log.
    SyncSim {
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge metrics.json files one level under a directory into one table.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(args: Args) -> wearmocap::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    } else {
        cfg.reseed();
    }
    match &args.command {
        Command::Synth { out } => cli::cmd_synth(&cfg, out),
        Command::Align { data, out } => cli::cmd_align(&cfg, data, out),
        Command::TrainTeacher { data, out } => cli::cmd_train_teacher(&cfg, data, out),
        Command::Distill { data, teacher, out } => cli::cmd_distill(&cfg, data, teacher, out),
        Command::Eval {
            data,
            ckpt,
            mode,
            out,
        } => {
            let mode = EvalMode::parse(mode)?;
            cli::cmd_eval(&cfg, data, ckpt, &mode, out)
        }
        Command::SyncSim { out } => cli::cmd_sync_sim(&cfg, out),
        Command::Report { data, out } => cli::cmd_report(data, out),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = json!({
                "error": {
                    "kind": format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or("Error"),
                    "message": e.to_string(),
                    "exit_code": e.exit_code(),
                }
            });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
