use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dyntomo_cli::config::{preset_text, PRESETS};
use dyntomo_cli::{cmd_metrics, cmd_reconstruct, cmd_simulate, cmd_subsample, Algorithm, CliError, ReconstructOptions, SimulateOptions};

/// Dynamic fan-beam CT: simulate scans of a moving-block phantom and
/// reconstruct them.
///
/// Exit codes: 0 ok, 2 configuration or input error, 3 file error,
/// 4 solver diverged (partial results are still written).
#[derive(Parser)]
#[command(name = "dyntomo", version)]
struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset used as the base configuration.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the phantom, simulate a scan and write sinogram, ground
    /// truth, block trajectory, resolved config and manifest.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// `none` skips the Poisson noise.
        #[arg(long, value_parser = ["none", "poisson"])]
        noise: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct a sinogram container.
    Reconstruct {
        #[arg(value_enum)]
        algorithm: Algorithm,
        /// Sinogram container header (`.toml`).
        #[arg(long)]
        sinogram: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of time frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Projections per frame.
        #[arg(long)]
        per_frame: Option<usize>,
        /// Projections between the starts of consecutive frames.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Ground-truth stack to score against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Keep the projections at the given angles: `0,90,180`,
    /// `start:step:stop` or `every:k`.
    Subsample {
        #[arg(long)]
        sinogram: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        angles: String,
        /// Output container header path.
        #[arg(long)]
        out: PathBuf,
        /// Take each angle from this rotation of a repeated scan (0-based).
        #[arg(long)]
        occurrence: Option<usize>,
    },
    /// Per-frame PSNR, relative L2 and block centroid error.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset configuration, or list them.
    Preset { name: Option<String> },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { cfg, out, noise, seed } => {
            let opts = SimulateOptions {
                config: cfg.config,
                preset: cfg.preset,
                out,
                noiseless: noise.as_deref() == Some("none"),
                seed,
            };
            cmd_simulate(&opts)?;
        }
        Command::Reconstruct { algorithm, sinogram, cfg, out, frames, per_frame, stride, max_iters, truth } => {
            let opts = ReconstructOptions {
                config: cfg.config,
                preset: cfg.preset,
                frames,
                per_frame,
                stride,
                max_iters,
                truth,
                ..ReconstructOptions::new(algorithm, sinogram, out)
            };
            let outcome = cmd_reconstruct(&opts)?;
            if let Some(r) = outcome.report {
                println!("{}: {} iterations, stop reason {:?}", r.algorithm, r.iterations, r.stop_reason);
            }
        }
        Command::Subsample { sinogram, angles, out, occurrence } => {
            let s = cmd_subsample(&sinogram, &angles, &out, occurrence)?;
            println!("kept {} projections", s.n_proj());
        }
        Command::Metrics { recon, truth, out } => {
            let m = cmd_metrics(&recon, &truth, out.as_deref())?;
            if out.is_none() {
                print!("{}", m.to_toml());
            }
        }
        Command::Preset { name: Some(name) } => print!("{}", preset_text(&name)?),
        Command::Preset { name: None } => PRESETS.iter().for_each(|(n, _)| println!("{n}")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
