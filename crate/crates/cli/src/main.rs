//! `hotdic`: speckle image enhancement, haze restoration and DIC from the
//! command line.

mod commands;
mod report;

use clap::{Parser, Subcommand};
use commands::{CliError, Context, SynthKind};
use hotdic::config::PipelineConfig;
use hotdic::experiment::RestoreOrder;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "hotdic", version, about = "Thermal-radiation and heat-haze suppression for speckle DIC")]
struct Cli {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (for `average`, may also name the output image).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for batch work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `speckle.seed` and `haze.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `restoration.nsr`.
    #[arg(long, global = true)]
    nsr: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic speckle, exposure-degraded or hazed images.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Speckle)]
        kind: SynthKind,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Exposure gain (defaults: 0.15 under, 3.0 over).
        #[arg(long)]
        gain: Option<f64>,
        /// Sensor noise added after an exposure change.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Enhance images with dual-channel exposure fusion.
    Fuse {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Restore a hazed image against a clean reference.
    Restore {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Pixel-wise mean of a frame stack.
    Average {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// FSIM between two images.
    Fsim {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Mean intensity gradient of each image.
    Mig {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Displacement and strain between a reference and a deformed image.
    Dic {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "def")]
        deformed: PathBuf,
    },
    /// Compare fused, averaged and restored strategies on a hazed sequence.
    ExperimentHaze {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(required = true)]
        frames: Vec<PathBuf>,
        #[arg(long, value_parser = parse_order)]
        order: Option<RestoreOrder>,
    },
}

fn parse_order(s: &str) -> Result<RestoreOrder, String> {
    s.parse().map_err(|e: hotdic::Error| e.to_string())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Fuse { .. } => "fuse",
            Command::Restore { .. } => "restore",
            Command::Average { .. } => "average",
            Command::Fsim { .. } => "fsim",
            Command::Mig { .. } => "mig",
            Command::Dic { .. } => "dic",
            Command::ExperimentHaze { .. } => "experiment-haze",
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.speckle.seed = seed;
        cfg.haze.seed = seed;
    }
    if let Some(nsr) = cli.nsr {
        cfg.restoration.nsr = nsr;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let config = load_config(&cli)?;
    let mut ctx = Context::new(cli.command.name(), config, cli.out.clone());
    let result = match &cli.command {
        Command::Synth {
            kind,
            count,
            gain,
            noise,
        } => commands::synth(&mut ctx, *kind, *count, *gain, *noise),
        Command::Fuse { inputs } => commands::fuse(&mut ctx, inputs),
        Command::Restore { reference, target } => commands::restore(&mut ctx, reference, target),
        Command::Average { inputs } => commands::average(&mut ctx, inputs),
        Command::Fsim { reference, target } => commands::fsim_cmd(&mut ctx, reference, target),
        Command::Mig { inputs } => commands::mig_cmd(&mut ctx, inputs),
        Command::Dic {
            reference,
            deformed,
        } => commands::dic_cmd(&mut ctx, reference, deformed),
        Command::ExperimentHaze {
            reference,
            frames,
            order,
        } => commands::experiment_haze(&mut ctx, reference, frames, *order),
    };
    if matches!(result, Err(CliError::Usage(_))) {
        return result;
    }
    ctx.manifest.duration_seconds = start.elapsed().as_secs_f64();
    // The manifest is written even when processing failed part-way.
    let written = if ctx.out.is_dir() { ctx.write_manifest() } else { Ok(()) };
    result?;
    written?;
    if ctx.manifest.failures() > 0 {
        return Err(CliError::Failed(format!(
            "{} input(s) failed; see manifest.json",
            ctx.manifest.failures()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hotdic: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
