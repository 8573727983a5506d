use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cubeshap::tree::DEFAULT_DEPTH_CAP;
use cubeshap::{Error, MetricKind, ModelFormat};

mod bench;
mod compute;
mod output;
mod selftest;

#[derive(Parser)]
#[command(name = "cubeshap", version, about = "Shapley/Banzhaf attributions for tree ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute model outputs to features for every consumer row.
    Compute(ComputeArgs),
    /// Time the pipeline stages on synthetic models and data.
    Bench(BenchArgs),
    /// Run the golden suite, optionally comparing against reference values.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Native,
    Xgb,
}

impl From<FormatArg> for ModelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Native => ModelFormat::Native,
            FormatArg::Xgb => ModelFormat::XgboostDump,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum MetricArg {
    Shapley,
    Banzhaf,
    ShapleyIv,
    BanzhafIv,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Shapley => MetricKind::Shapley,
            MetricArg::Banzhaf => MetricKind::Banzhaf,
            MetricArg::ShapleyIv => MetricKind::ShapleyIv,
            MetricArg::BanzhafIv => MetricKind::BanzhafIv,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum ModeArg {
    Background,
    PathDependent,
    Baseline,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Args)]
pub struct ModelArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "native")]
    pub format: FormatArg,
    /// Reject trees deeper than this (at most 30).
    #[arg(long, default_value_t = DEFAULT_DEPTH_CAP)]
    pub depth_cap: usize,
}

#[derive(Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV with a header naming the model's features.
    #[arg(long)]
    pub consumers: PathBuf,
    /// CSV of background rows. Without it the path-dependent mode is used.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "shapley")]
    pub metric: MetricArg,
    /// Defaults to `background` when a background is given, else `path-dependent`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Baseline mode: a row index into the background, or a CSV whose first row is used.
    #[arg(long)]
    pub baseline_row: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to the output file's extension, else CSV.
    #[arg(long, value_enum)]
    pub out_format: Option<OutFormat>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Cross-check this many consumer rows against the exponential oracle.
    #[arg(long, default_value_t = 0)]
    pub verify: usize,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 50)]
    pub trees: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    /// Consumer rows at the smallest grid point.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Background rows at the smallest grid point.
    #[arg(long, default_value_t = 10_000)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "shapley")]
    pub metric: MetricArg,
    /// Runs per grid point; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Exit with the verification code when growth exceeds 3x per doubling.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args)]
pub struct SelftestArgs {
    /// Reference attributions (CSV in the `compute` output layout).
    #[arg(long, requires_all = ["model", "consumers"])]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "native")]
    pub format: FormatArg,
    #[arg(long)]
    pub consumers: Option<PathBuf>,
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "shapley")]
    pub metric: MetricArg,
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Lib(Error),
    Verification(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Verification(_) => 5,
            Failure::Io(_) => 6,
            Failure::Lib(e) => match e {
                Error::InvalidDepthCap(_) | Error::TooManyPlayers { .. } => 2,
                Error::Schema(_)
                | Error::Cycle { .. }
                | Error::Cover { .. }
                | Error::DepthExceeded { .. }
                | Error::EmptyEnsemble
                | Error::Json { .. } => 3,
                Error::Io { .. } => 6,
                _ => 4,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

pub fn init_threads(threads: usize) -> Result<(), Failure> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compute(args) => compute::run(&args),
        Command::Bench(args) => bench::run(&args),
        Command::Selftest(args) => selftest::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
