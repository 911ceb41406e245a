//! Command-line pipeline: synth → train → infer → eval → consistency →
//! ablate, plus gradcheck and params. Every subcommand maps onto the core
//! entry points; all file writers are byte-deterministic.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pfm;
pub mod ppm;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::Result;

#[derive(Parser)]
#[command(name = "mirrordepth", version, about = "Prompt-conditioned dense depth on frozen encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

/// Configuration sources, applied in order: preset, config file, --set.
#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Built-in preset: `toy` or `paper` (default: toy)
    #[arg(long)]
    pub preset: Option<String>,
    /// A config.resolved-style file applied over the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Single key=value override; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        config::resolve(self.preset.as_deref(), self.config.as_deref(), &self.sets)
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with analytic ground truth
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the mirror and decoder on a dataset
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory (manifest.tsv)
        #[arg(long)]
        dataset: PathBuf,
        /// Run directory for config.resolved, CSV logs and checkpoints
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint written by a previous run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predict a depth map for one PPM image
    Infer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image (P6 PPM)
        #[arg(long)]
        image: PathBuf,
        /// Output depth map (PFM)
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate depth metrics over a dataset
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write each prediction as a PFM into the run directory
        #[arg(long)]
        dump_pred: bool,
    },
    /// Temporal reprojection consistency and spatial continuity
    Consistency {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mirror-state ablations and the initialization comparison
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also train an `--init random|checkpoint` variant
        #[arg(long)]
        init: Option<String>,
        /// Checkpoint for `--init checkpoint` (defaults to the converged
        /// checkpoint written by this invocation)
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
    },
    /// Finite-difference gradient checks (64-bit mode)
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print the trainable parameter count
    Params {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print a per-group breakdown to stderr
        #[arg(long)]
        breakdown: bool,
    },
}

/// Parse and run. Exit code 0 on success, 1 on runtime errors, 2 on usage
/// errors (clap's convention).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { cfg, out } => commands::synth::run(&cfg.resolve()?, &out),
        Command::Train {
            cfg,
            dataset,
            out,
            resume,
        } => commands::train::run(&cfg.resolve()?, &dataset, &out, resume.as_deref()),
        Command::Infer {
            cfg,
            checkpoint,
            image,
            out,
        } => commands::infer::run(&cfg.resolve()?, &checkpoint, &image, &out),
        Command::Eval {
            cfg,
            checkpoint,
            dataset,
            out,
            dump_pred,
        } => commands::eval::run(&cfg.resolve()?, &checkpoint, &dataset, &out, dump_pred),
        Command::Consistency {
            cfg,
            checkpoint,
            dataset,
            out,
        } => commands::consistency::run(&cfg.resolve()?, &checkpoint, &dataset, &out),
        Command::Ablate {
            cfg,
            dataset,
            out,
            init,
            init_checkpoint,
        } => commands::ablate::run(
            &cfg.resolve()?,
            &dataset,
            &out,
            init.as_deref(),
            init_checkpoint.as_deref(),
        ),
        Command::Gradcheck { cfg } => commands::gradcheck::run(&cfg.resolve()?),
        Command::Params { cfg, breakdown } => commands::params::run(&cfg.resolve()?, breakdown),
    }
}
