//! `hdgmm`: build, fit, compress, evaluate and search signal dictionaries.

mod compress;
mod data;
mod error;
mod fit;
mod output;
mod search;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::output::{Basis, Distance, FitMode, MatchMethod, Run, Width};
use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "hdgmm", version, about = "HD-GMM compression and matching of signal dictionaries")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// `key = value` file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON-lines metrics destination (stderr when absent).
    #[arg(long, global = true)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic two-exponential dictionary over a parameter grid.
    GenDict(GenDictArgs),
    /// Sample records from a random HD-GMM.
    GenGmm(GenGmmArgs),
    /// Fit an HD-GMM to a dictionary file.
    Fit(FitArgs),
    /// Encode a dictionary with a fitted model.
    Compress(CompressArgs),
    /// Decode a compressed file back into a dictionary file.
    Reconstruct(ReconstructArgs),
    /// Reconstruction-error table for SVD and HD-GMM.
    Evaluate(EvaluateArgs),
    /// Match query signals against a dictionary.
    Match(MatchArgs),
    /// BIC over a grid of K and d.
    BicScan(BicScanArgs),
    /// Validate any supported file and print its header.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct GenDictArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated T1 values.
    #[arg(long)]
    pub t1: Option<String>,
    #[arg(long)]
    pub t2_min: Option<f64>,
    #[arg(long)]
    pub t2_max: Option<f64>,
    #[arg(long)]
    pub t2_n: Option<usize>,
    #[arg(long)]
    pub df_min: Option<f64>,
    #[arg(long)]
    pub df_max: Option<f64>,
    #[arg(long)]
    pub df_n: Option<usize>,
    /// Samples per signal.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tr: Option<f64>,
    /// Add white noise at this SNR (dB), e.g. to make query files.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub width: Option<Width>,
}

#[derive(Debug, Args)]
pub struct GenGmmArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the generating model here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed of the draws; the model itself comes from `--seed`.
    #[arg(long)]
    pub sample_seed: Option<u64>,
    /// Spread of the component means relative to the noise level.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Noise variance b shared by all components.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub width: Option<Width>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mode: Option<FitMode>,
    /// Scale every record to unit norm before fitting.
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Records read from the head of the file to initialize online fits.
    #[arg(long)]
    pub init_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub basis: Option<Basis>,
    /// Passes over the file in online mode.
    #[arg(long)]
    pub passes: Option<usize>,
    /// Held-out dictionary for the reported log-likelihood.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write the checkpoint every this many batches (0: only at the end).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue an online fit from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many batches in this invocation.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub width: Option<Width>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Copy labels from this dictionary.
    #[arg(long)]
    pub labels_from: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<Width>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Use this fitted model instead of fitting one per d.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated reduced dimensions.
    #[arg(long)]
    pub d: Option<String>,
    /// Comma-separated SNRs in dB; the noiseless row is always included.
    #[arg(long)]
    pub snr: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Size table for this many records without reading any data.
    #[arg(long)]
    pub size_query: Option<u64>,
    /// Samples per signal for the compression-ratio report.
    #[arg(long)]
    pub m: Option<usize>,
    /// Original dictionary size in bytes as stated elsewhere.
    #[arg(long)]
    pub stated_original_bytes: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Labelled dictionary (signals for full/svd, labels for all methods).
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<MatchMethod>,
    /// Compressed dictionary for the hdgmm method.
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    /// SVD rank.
    #[arg(long)]
    pub d: Option<usize>,
    /// Clusters scanned per query.
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub distance: Option<Distance>,
    /// Route queries as noisy observations at this SNR (dB).
    #[arg(long)]
    pub query_snr: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Results file of another run to compare against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BicScanArgs {
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub k_grid: Option<String>,
    #[arg(long)]
    pub d_grid: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub path: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenDict(_) => "gen-dict",
            Command::GenGmm(_) => "gen-gmm",
            Command::Fit(_) => "fit",
            Command::Compress(_) => "compress",
            Command::Reconstruct(_) => "reconstruct",
            Command::Evaluate(_) => "evaluate",
            Command::Match(_) => "match",
            Command::BicScan(_) => "bic-scan",
            Command::Info(_) => "info",
        }
    }
}

fn setup(global: Global, command: &'static str) -> CliResult<Run> {
    let mut settings = Settings::from_config(global.config.as_deref())?;
    let seed = settings.get("seed", global.seed, 0u64)?;
    let threads = settings.get("threads", global.threads, 0usize)?;
    let metrics = settings.path_opt("metrics", global.metrics)?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    Run::new(command, settings, seed, metrics.as_deref())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let mut run = setup(cli.global, name)?;
    match cli.command {
        Command::GenDict(a) => data::gen_dict(&mut run, a),
        Command::GenGmm(a) => data::gen_gmm(&mut run, a),
        Command::Info(a) => data::info(&mut run, a),
        Command::Fit(a) => fit::fit(&mut run, a),
        Command::BicScan(a) => fit::bic_scan(&mut run, a),
        Command::Compress(a) => compress::compress(&mut run, a),
        Command::Reconstruct(a) => compress::reconstruct(&mut run, a),
        Command::Evaluate(a) => compress::evaluate(&mut run, a),
        Command::Match(a) => search::matching(&mut run, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hdgmm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
