//! `tgv`: generate test images, denoise, evaluate TGV² and run the sweep
//! experiments. Exit codes: 0 success, 1 usage, 2 non-convergence, 3 I/O.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tgv_core::solver::Metric;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<tgv_core::Error> for CliError {
    fn from(e: tgv_core::Error) -> Self {
        use tgv_core::Error as E;
        match e {
            E::Io(_) | E::Parse(_) | E::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tgv", version, about = "TV / TGV² denoising and regime experiments")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand. Unset flags fall back to the config
/// file, then to the command's default.
#[derive(Debug, Clone, Default, Args)]
pub struct Shared {
    /// Grid size (pixels per axis)
    #[arg(long, global = true, value_parser = config::count)]
    pub n: Option<usize>,
    #[arg(long, global = true, value_parser = config::real)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_parser = config::real)]
    pub beta: Option<f64>,
    /// Fidelity exponent, 1 or 2
    #[arg(long, global = true, value_parser = config::count)]
    pub p: Option<usize>,
    #[arg(long, global = true, value_parser = config::real)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", global = true, value_parser = config::count)]
    pub max_iter: Option<usize>,
    /// Noise seed
    #[arg(long, global = true, value_parser = config::seed)]
    pub seed: Option<u64>,
    /// Noise standard deviation
    #[arg(long, global = true, value_parser = config::real)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweep points
    #[arg(long, global = true, value_parser = config::count)]
    pub jobs: Option<usize>,
    /// Primal/dual step ratio tau/sigma
    #[arg(long = "step-ratio", global = true, value_parser = config::real)]
    pub step_ratio: Option<f64>,
    /// Residual-balancing step adaptation (true/false)
    #[arg(long, global = true, value_parser = config::boolean)]
    pub adaptive: Option<bool>,
    /// Grid spacing h
    #[arg(long, global = true, value_parser = config::real)]
    pub spacing: Option<f64>,
    /// Stopping metric: `gap` (primal-dual gap) or `change` (iterate change)
    #[arg(long, global = true, value_parser = config::metric)]
    pub metric: Option<Metric>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageKind {
    Disk,
    DiskOffset,
    Squares,
    RampEllipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Tv,
    Tgv2,
    #[value(name = "tv2-1d")]
    Tv21d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    ToData,
    TvEquivalence,
    Regression,
    AffineCorrection,
    BetaStar,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic test image
    Generate {
        #[arg(value_enum)]
        kind: ImageKind,
        /// Disk radius as a fraction of the side length
        #[arg(long, value_parser = config::real)]
        radius: Option<f64>,
        /// Disk centre offset `x,y` as fractions of the side length
        #[arg(long, value_parser = config::pair, allow_hyphen_values = true)]
        offset: Option<[f64; 2]>,
    },
    /// Solve a TV, TGV² or 1-D second-order TV denoising problem
    Denoise {
        input: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        /// Also write the TGV² vector field w
        #[arg(long = "w-out")]
        w_out: Option<PathBuf>,
        /// Write the energy/metric checkpoints as CSV
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run a sweep experiment and write its CSV report
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        /// Built-in input image (ignored with --input)
        #[arg(long, value_enum)]
        image: Option<ImageKind>,
        /// Input image or signal file
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = config::real)]
        radius: Option<f64>,
        #[arg(long, value_parser = config::pair, allow_hyphen_values = true)]
        offset: Option<[f64; 2]>,
        /// β sweep `a:b` (one point per decade) or `a:b:k`
        #[arg(long = "beta-list", value_parser = config::sweep)]
        beta_list: Option<config::Sweep>,
        /// α sweep `a:b` or `a:b:k`
        #[arg(long = "alpha-list", value_parser = config::sweep)]
        alpha_list: Option<config::Sweep>,
        /// Rungs of the doubling (α, β) ladder
        #[arg(long, value_parser = config::count)]
        rungs: Option<usize>,
    },
    /// Relative L² and L∞ distance between two images
    Compare { a: PathBuf, b: PathBuf },
    /// Evaluate TGV²(u) for a given image
    EvalTgv { input: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
