//! Batch front end for the gazefuse pipeline.
//!
//! Subcommands: `fuse`, `calibrate`, `metrics`, `detect`, `simulate`.
//! Exit codes: 0 on success, 2 on input or schema errors, 3 on numerical
//! failures (singular systems, degenerate fits).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod format;
mod tracefile;

use commands::{
    cmd_calibrate, cmd_detect, cmd_fuse, cmd_metrics, cmd_simulate, CalibrateOpts, DetectOpts,
    FuseOpts, MetricsOpts, MetricsTask, SimulateOpts,
};
use config::load_config;

/// Errors surfaced to the user; the variant picks the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed inputs: exit 2.
    Input(String),
    /// Numerical failures: exit 3.
    Numerical(String),
}

#[derive(Parser)]
#[command(
    name = "gazefuse",
    version,
    about = "Drift-free gaze reconstruction by fusing pupil position with iris velocity"
)]
struct Cli {
    /// Configuration file (JSON or TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for the stochastic stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a trace CSV (or two with --cyclopean) into a gaze CSV.
    Fuse {
        /// Trace file; pass left then right with --cyclopean.
        #[arg(required = true, num_args = 1..=2)]
        traces: Vec<PathBuf>,
        /// Combine two eye traces into their midpoint.
        #[arg(long)]
        cyclopean: bool,
        /// Calibration JSON for the (first) trace.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Calibration JSON for the second trace; first one reused if absent.
        #[arg(long)]
        calibration2: Option<PathBuf>,
        /// Skip calibration and emit raw units.
        #[arg(long)]
        uncalibrated: bool,
    },
    /// Fit position and velocity calibrations from a calibration recording.
    Calibrate {
        trace: PathBuf,
        /// Targets CSV: onset_ms,x_deg,y_deg[,x_px,y_px].
        #[arg(long)]
        targets: PathBuf,
    },
    /// Accuracy and precision per target over a fused gaze CSV.
    Metrics {
        gaze: PathBuf,
        /// Targets CSV; rows are fixation targets or pursuit waypoints.
        #[arg(long)]
        targets: PathBuf,
        /// fixation (default) or pursuit.
        #[arg(long, default_value = "fixation")]
        task: String,
        /// Eye label copied into the report rows.
        #[arg(long)]
        eye: Option<String>,
        /// Trace identifier; defaults to the gaze file stem.
        #[arg(long)]
        trace_id: Option<String>,
    },
    /// Microsaccade detection over a fused gaze CSV.
    Detect {
        gaze: PathBuf,
        /// Onsets CSV (onset_ms column; extra columns ignored).
        #[arg(long)]
        onsets: PathBuf,
    },
    /// Seeded simulation study of the fusion.
    Simulate {
        /// Trial count override.
        #[arg(long)]
        trials: Option<usize>,
        /// Also dump every trial's signals as CSV for plotting.
        #[arg(long)]
        dump_trials: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Fuse { traces, cyclopean, calibration, calibration2, uncalibrated } => cmd_fuse(
            &FuseOpts {
                traces,
                cyclopean,
                calibration,
                calibration2,
                uncalibrated,
                output: cli.output,
            },
            &cfg,
        ),
        Command::Calibrate { trace, targets } => {
            cmd_calibrate(&CalibrateOpts { trace, targets, output: cli.output }, &cfg)
        }
        Command::Metrics { gaze, targets, task, eye, trace_id } => {
            let task = match task.as_str() {
                "fixation" => MetricsTask::Fixation,
                "pursuit" => MetricsTask::Pursuit,
                other => {
                    return Err(CliError::Input(format!(
                        "unknown task {other:?}; expected fixation or pursuit"
                    )))
                }
            };
            cmd_metrics(
                &MetricsOpts { gaze, targets, task, eye, trace_id, output: cli.output },
                &cfg,
            )
        }
        Command::Detect { gaze, onsets } => {
            cmd_detect(&DetectOpts { gaze, onsets, seed: cli.seed, output: cli.output }, &cfg)
        }
        Command::Simulate { trials, dump_trials } => cmd_simulate(
            &SimulateOpts { seed: cli.seed, trials, output: cli.output, dump_trials },
            &cfg,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
