//! `lrcalib`: synthesize data, calibrate, sweep cost curves and evaluate results.
//!
//! Exit status is 0 on success, 1 for input or validation errors and 2 when
//! the optimizer aborts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod eval;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lrcalib", version, about = "LiDAR to 2D scanning radar extrinsic calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic data set and write a manifest for it.
    Synth {
        /// Scene and sensor configuration; defaults to the built-in scene.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth extrinsics JSON; defaults to identity.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the extrinsics for every pair in a manifest.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        /// Result JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Overrides for the manifest's cost, optimizer and max_range_m settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random restarts, overriding the configured value.
        #[arg(long)]
        restarts: Option<usize>,
        /// Start of the first attempt instead of zero.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate the cost along one parameter axis around a center.
    CostSweep {
        #[arg(long)]
        manifest: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// theta_x, theta_y, theta_z, t_x, t_y, t_z or an index 0-5.
        #[arg(long, value_parser = commands::parse_axis)]
        axis: usize,
        /// Center extrinsics; defaults to the manifest's ground truth, else identity.
        #[arg(long)]
        center: Option<PathBuf>,
        /// Half-width of the sweep; 5 deg or 2 m by default.
        #[arg(long)]
        range: Option<f64>,
        /// Sweep spacing; 0.1 deg or 0.05 m by default.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Summarize calibration results against ground truth.
    Eval {
        /// Glob matching result files.
        #[arg(long)]
        results: String,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { config, gt, out, seed } => {
            let manifest = commands::synth(config.as_deref(), gt.as_deref(), &out, seed)?;
            println!("wrote {}", manifest.display());
        }
        Command::Calibrate {
            manifest,
            out,
            config,
            seed,
            restarts,
            init,
        } => {
            let r = commands::calibrate(&manifest, config.as_deref(), &out, seed, restarts, init.as_deref())?;
            let [rx, ry, rz] = r.extrinsics.rotation_deg;
            let [tx, ty, tz] = r.extrinsics.translation_m;
            println!(
                "rotation_deg [{rx:.4}, {ry:.4}, {rz:.4}] translation_m [{tx:.4}, {ty:.4}, {tz:.4}] cost {:.3} (attempt {})",
                r.final_cost, r.attempt_index
            );
        }
        Command::CostSweep {
            manifest,
            out,
            config,
            axis,
            center,
            range,
            step,
        } => {
            let rows = commands::cost_sweep(&manifest, config.as_deref(), center.as_deref(), axis, range, step, &out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Eval { results, gt, out } => {
            let r = commands::eval(&results, &gt, &out)?;
            println!("evaluated {} runs into {}", r.runs, out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let aborted = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<lrcalib::Error>(), Some(lrcalib::Error::OptimizationAborted(_))));
    if aborted {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
