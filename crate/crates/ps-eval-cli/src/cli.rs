use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{self, GlobalOpts};
use crate::error::EvalError;

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum MethodArg {
    L2,
    Rmaff,
}

#[derive(Parser, Debug)]
#[command(
    name = "pstk",
    about = "Photometric-stereo toolkit: render synthetic stacks, solve for normals (least squares or network), train, and evaluate.",
    disable_help_subcommand = true
)]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Numeric precision for tensors and solvers.
    #[arg(long, global = true, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Determinism mode: forces f64 and zeroes wall-clock fields so
    /// equal-seed runs emit byte-identical files.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render synthetic scenes described by a config into a dataset root.
    Render { config: PathBuf, out_dir: PathBuf },
    /// Estimate a normal map for one dataset directory.
    Solve {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Checkpoint directory (required for --method rmaff).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Image subset, e.g. "0-75" or "0,5,9".
        #[arg(long)]
        subset: Option<String>,
        dataset_dir: PathBuf,
        out_dir: PathBuf,
    },
    /// Train the network on a rendered dataset root (99:1 train/val split).
    Train { config: PathBuf, train_dir: PathBuf, out_dir: PathBuf },
    /// Compare a predicted normal map (.png/.pfm) against a dataset's
    /// ground truth; prints MAE and writes a report plus an error map.
    Eval {
        pred: PathBuf,
        dataset_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Error-map saturation point in degrees.
        #[arg(long, default_value_t = 90.0)]
        max_degrees: f64,
    },
    /// Train and evaluate every architecture variant; prints the table.
    Ablate { config: PathBuf, train_dir: PathBuf, out_dir: PathBuf },
    /// Finite-difference verification of every layer, the RMAFF module and
    /// a tiny full network (always double precision).
    Gradcheck { config: Option<PathBuf> },
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<(), EvalError> {
    configure_threads(cli.threads);
    let precision =
        if cli.deterministic { PrecisionArg::F64 } else { cli.precision };
    let opts = GlobalOpts { seed: cli.seed, deterministic: cli.deterministic };
    match cli.command {
        Command::Render { config, out_dir } => match precision {
            PrecisionArg::F32 => commands::cmd_render::<f32>(&config, &out_dir, &opts),
            PrecisionArg::F64 => commands::cmd_render::<f64>(&config, &out_dir, &opts),
        },
        Command::Solve { method, checkpoint, subset, dataset_dir, out_dir } => match method {
            MethodArg::L2 => match precision {
                PrecisionArg::F32 => {
                    commands::cmd_solve_l2::<f32>(&dataset_dir, &out_dir, subset.as_deref(), &opts)
                }
                PrecisionArg::F64 => {
                    commands::cmd_solve_l2::<f64>(&dataset_dir, &out_dir, subset.as_deref(), &opts)
                }
            },
            MethodArg::Rmaff => {
                let ckpt = checkpoint.ok_or_else(|| {
                    EvalError::validation("--method rmaff requires --checkpoint <dir>")
                })?;
                match precision {
                    PrecisionArg::F32 => commands::cmd_solve_rmaff::<f32>(
                        &dataset_dir,
                        &ckpt,
                        &out_dir,
                        subset.as_deref(),
                        &opts,
                    ),
                    PrecisionArg::F64 => commands::cmd_solve_rmaff::<f64>(
                        &dataset_dir,
                        &ckpt,
                        &out_dir,
                        subset.as_deref(),
                        &opts,
                    ),
                }
            }
        },
        Command::Train { config, train_dir, out_dir } => match precision {
            PrecisionArg::F32 => commands::cmd_train::<f32>(&config, &train_dir, &out_dir, &opts),
            PrecisionArg::F64 => commands::cmd_train::<f64>(&config, &train_dir, &out_dir, &opts),
        },
        Command::Eval { pred, dataset_dir, out, max_degrees } => match precision {
            PrecisionArg::F32 => commands::cmd_eval::<f32>(
                &pred,
                &dataset_dir,
                out.as_deref(),
                max_degrees,
                &opts,
            )
            .map(|_| ()),
            PrecisionArg::F64 => commands::cmd_eval::<f64>(
                &pred,
                &dataset_dir,
                out.as_deref(),
                max_degrees,
                &opts,
            )
            .map(|_| ()),
        },
        Command::Ablate { config, train_dir, out_dir } => match precision {
            PrecisionArg::F32 => commands::cmd_ablate::<f32>(&config, &train_dir, &out_dir, &opts),
            PrecisionArg::F64 => commands::cmd_ablate::<f64>(&config, &train_dir, &out_dir, &opts),
        },
        // Gradient checks are double precision by contract.
        Command::Gradcheck { config } => commands::cmd_gradcheck(config.as_deref()),
    }
}

/// Parses argv and runs; returns the process exit code (0 success,
/// 1 validation error or bad usage, 2 runtime failure).
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
