//! The `gdp` command line: dataset generation, training, restoration,
//! benchmark tables and gradient checks.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure.

mod check;
mod data;
mod eval;
mod restore;
mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::training::Scheme;

pub use data::{load_manifest, Manifest, ManifestSample, MANIFEST_FILE};
pub use eval::{BenchmarkReport, BenchmarkRow, CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Format { .. } | Error::Unsupported(_) | Error::Version { .. } => {
                CliError::Io(msg)
            }
            Error::InvalidModel(_) => CliError::Io(msg),
            Error::Numerical(_) => CliError::Numerical(msg),
            Error::KernelTooLarge { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidArgument(_)
            | Error::IndexOutOfRange(_)
            | Error::Empty(_) => CliError::Usage(msg),
        }
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "gdp",
    version,
    about = "Generic diffusion process denoising and deconvolution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop training patches and write a manifest.
    GenData(GenDataArgs),
    /// Train a model on a patch manifest.
    Train(TrainArgs),
    /// Denoise one image.
    Denoise(DenoiseArgs),
    /// Non-blind deconvolution of one image.
    Deconvolve(DeconvolveArgs),
    /// Benchmark table over a directory of clean images.
    Eval(EvalArgs),
    /// Finite-difference gradient checks on random tiny models.
    Gradcheck(GradcheckArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

#[derive(Debug, Args, Clone)]
#[group(id = "grid", multiple = false)]
pub struct GridArgs {
    /// Noise levels 1, 2, ..., M.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub sigma_max: Option<u32>,
    /// Explicit comma-separated noise levels, e.g. 15,25.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',', value_parser = positive_f64)]
    pub sigmas: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// Directory of .pgm/.png images.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Use this many procedural scenes instead of an image directory.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub synthetic: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Side of procedural scenes.
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(8..))]
    pub synthetic_size: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(2..))]
    pub patch_size: u32,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub per_image: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output directory for patches and manifest.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitKind {
    /// Deterministic DCT filters and linear influence functions.
    Plain,
    /// Seeded random parameters.
    Random,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest file, or the directory holding it.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub stages: u32,
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u32).range(1..))]
    pub filters: u32,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(3..))]
    pub filter_size: u32,
    /// Must agree with the manifest when given.
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 63, value_parser = clap::value_parser!(u32).range(2..))]
    pub rbf_centers: u32,
    #[arg(long, default_value = "greedy+joint")]
    pub scheme: Scheme,
    /// Total L-BFGS iteration budget.
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    pub lbfgs_iters: u32,
    /// Iterations per greedy stage; by default the greedy phase gets half
    /// the budget under greedy+joint and all of it under greedy.
    #[arg(long)]
    pub greedy_iters: Option<u32>,
    #[arg(long, value_enum, default_value_t = InitKind::Plain)]
    pub init: InitKind,
    /// Seed of the random initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop the reaction term.
    #[arg(long)]
    pub no_reaction: bool,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    /// Per-iteration CSV log.
    #[arg(long)]
    pub log_csv: Option<PathBuf>,
    /// Suppress the per-iteration log on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, allow_negative_numbers = true, value_parser = positive_f64)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Clean image for PSNR/SSIM.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeconvolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Text PSF: "rows cols" then row-major values.
    #[arg(long)]
    pub psf: PathBuf,
    #[arg(long, allow_negative_numbers = true, value_parser = positive_f64)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// HQS iterations (default: one per model stage).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub iterations: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Denoise,
    Deconv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of clean test images.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Denoise)]
    pub mode: EvalMode,
    /// Noise levels (default 5,15,25,50 for denoise, 2.55,5.10,7.65,10.20
    /// for deconv).
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',', value_parser = positive_f64)]
    pub sigmas: Option<Vec<f64>>,
    /// Directory of text PSFs (deconv mode).
    #[arg(long)]
    pub psfs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the ms column with wall-clock times.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub count: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
    pub eps: f64,
    /// Negative control: flip the sign of the analytic log-lambda gradient.
    #[arg(long)]
    pub corrupt_lambda: bool,
}

fn configure_threads() -> CliResult {
    let Ok(v) = std::env::var("GDP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("GDP_THREADS must be a positive integer, got '{v}'")))?;
    // a pool may already exist when called repeatedly in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn execute<I, T>(args: I) -> CliResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string()));
        }
    };
    configure_threads()?;
    match cli.command {
        Command::GenData(a) => data::cmd_gen_data(&a),
        Command::Train(a) => train::cmd_train(&a),
        Command::Denoise(a) => restore::cmd_denoise(&a),
        Command::Deconvolve(a) => restore::cmd_deconvolve(&a),
        Command::Eval(a) => eval::cmd_eval(&a),
        Command::Gradcheck(a) => check::cmd_gradcheck(&a),
    }
}

/// [`execute`] with errors printed to stderr; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = e.message().trim_end();
            if msg.starts_with("error:") {
                eprintln!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            e.exit_code()
        }
    }
}

pub(crate) fn sigma_grid(grid: &GridArgs) -> Option<Vec<f64>> {
    match (&grid.sigmas, grid.sigma_max) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(m)) => Some((1..=m).map(f64::from).collect()),
        (None, None) => None,
    }
}
