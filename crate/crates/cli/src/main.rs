//! `sdr`: estimate reduction directions from CSV data and run the
//! simulation studies.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdr_core::data::ColumnSelector;
use sdr_core::estimators::Method;
use sdr_core::slicing::Divisor;
use sdr_core::{ErrorKind, SdrError};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "sdr", version, about = "Sliced inverse regression, SAVE and bias-corrected SAVE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate reduction directions from a CSV file.
    Estimate(EstimateArgs),
    /// Monte Carlo study of one model and slice count.
    Simulate(SimulateArgs),
    /// Grid of median R² over models, methods and slice counts.
    Table1(Table1Args),
    /// Bias and consistency sweeps over sample size and slice size.
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputMode {
    #[default]
    Human,
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long = "out", value_enum, default_value_t = OutputMode::Human)]
    pub format: OutputMode,
    /// Write to this file instead of stdout.
    #[arg(short = 'o', long = "output")]
    pub path: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column, by header name or zero-based index.
    #[arg(long = "y")]
    pub y: ColumnSelector,
    /// Number of slices H (default: max(2, round(n/20))).
    #[arg(long)]
    pub slices: Option<usize>,
    /// Use one slice per distinct response value instead of equal-count slices.
    #[arg(long, conflicts_with = "slices")]
    pub discrete: bool,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Number of directions to report.
    #[arg(long)]
    pub k: usize,
    /// Within-slice covariance divisor: `c` or `c-1`.
    #[arg(long, default_value = "c-1", value_parser = parse_divisor)]
    pub divisor: Divisor,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Model number, 1 to 5.
    #[arg(long)]
    pub model: u8,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Comma-separated subset of sir, save, csave.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "save,sir,csave")]
    pub methods: Vec<Method>,
    /// Include min, q1, q3 and max alongside the median.
    #[arg(long)]
    pub quantiles: bool,
    /// Predictor dimension.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Re-estimate the predictor mean and covariance before slicing.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct Table1Args {
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub models: Vec<u8>,
    /// Slice counts.
    #[arg(long = "H", value_delimiter = ',', default_value = "2,6,24,96")]
    pub slices: Vec<usize>,
    #[arg(long, default_value_t = 480)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// Calibration of Λₙ and Λ̃ₙ at small c and large n.
    Bias,
    /// Fixed c, growing n.
    Consistency,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub mode: SweepMode,
    /// Slice sizes c (default: 2 for bias, 4 for consistency).
    #[arg(long = "c-grid", value_delimiter = ',')]
    pub c_grid: Option<Vec<usize>>,
    /// Sample sizes n (default: 20000 for bias, 400,1600,6400 for consistency).
    #[arg(long = "n-grid", value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Null-model predictor dimension (1 to 3).
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Sweep R² of a regression model (1 to 5, p = 10) instead of the null model.
    #[arg(long)]
    pub model: Option<u8>,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_divisor(s: &str) -> Result<Divisor, String> {
    s.parse()
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(SdrError),
    Io(String),
}

impl From<SdrError> for CliError {
    fn from(e: SdrError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Thread count from `SDR_THREADS` (unset or 0 means one per core).
fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("SDR_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("SDR_THREADS must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::Estimate(args) => commands::estimate(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Table1(args) => commands::table1(&args),
        Command::Sweep(args) => commands::sweep(&args),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
