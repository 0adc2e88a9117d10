//! `unmix`: prune a spectral library, unmix an image, simulate scenes and run
//! Monte Carlo benchmarks from the command line.
//!
//! Exit codes: 0 success, 2 input error (bad flags, unreadable or malformed
//! files), 3 numerical error.

mod commands;
mod config;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use unmix_core::Error;

#[derive(Debug, Parser)]
#[command(name = "unmix", version, about = "Library-mismatch-robust sparse unmixing")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank library members by MUSIC and robust-MUSIC residues and keep the best.
    Prune(PruneArgs),
    /// Prune, regress and refine the library to unmix an image.
    Unmix(UnmixArgs),
    /// Write a synthetic scene (observations, perturbed library, truth) to disk.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison of MUSIC-CSR, RMUSIC-CSR and RMUSIC-DANSER.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// λ = 0.5 (refinement) and 0.1 (regression).
    MonteCarlo,
    /// λ = 0.04 and 0.005, the six-material illustration setting.
    Illustrative,
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::MonteCarlo => "monte-carlo",
            Preset::Illustrative => "illustrative",
        })
    }
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Preset as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Csr,
    None,
}

impl std::fmt::Display for InitArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitArg::Csr => "csr",
            InitArg::None => "none",
        })
    }
}

impl std::str::FromStr for InitArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <InitArg as ValueEnum>::from_str(s, true)
    }
}

/// Subspace and robustness options shared by `prune` and `unmix`.
#[derive(Debug, Clone, Args)]
pub struct PruneOpts {
    /// Signal subspace dimension; estimated from the data energy when omitted.
    #[arg(long)]
    pub order: Option<usize>,
    /// Energy fraction used to estimate the subspace dimension.
    #[arg(long, conflicts_with = "order")]
    pub energy_fraction: Option<f64>,
    /// Correlation floor α; sets ε = (1−α)/(1+α)·min_k‖d_k‖.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Robustness radius ε, overriding --alpha.
    #[arg(long, conflicts_with = "alpha")]
    pub epsilon: Option<f64>,
    /// Number of library members to keep.
    #[arg(long)]
    pub keep: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    /// Library CSV (bands × members); labels from a `.labels` sidecar or header.
    #[arg(long, value_name = "CSV")]
    pub dictionary: Option<PathBuf>,
    /// Observations CSV (bands × pixels).
    #[arg(long, value_name = "CSV")]
    pub observations: Option<PathBuf>,
    #[command(flatten)]
    pub prune: PruneOpts,
    /// Keep every member whose robust residue is at most this value instead of a fixed count.
    #[arg(long, conflicts_with = "keep")]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverOpts {
    /// λ presets; individual flags override them.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Row-sparsity weight of the refinement.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Quasi-norm exponent, 0 < p < 1.
    #[arg(long)]
    pub p: Option<f64>,
    /// Coupling weight between the working and the constrained library.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Smoothing constant of the quasi-norm.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Stop when ‖ΔC‖_F falls to this value.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Row-sparsity weight of the regression.
    #[arg(long)]
    pub csr_lambda: Option<f64>,
    /// ADMM penalty of the regression.
    #[arg(long)]
    pub csr_rho: Option<f64>,
    /// Primal and dual residual tolerance of the regression.
    #[arg(long)]
    pub csr_tol: Option<f64>,
    #[arg(long)]
    pub csr_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct UnmixArgs {
    #[arg(long, value_name = "CSV")]
    pub dictionary: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub observations: Option<PathBuf>,
    /// True abundances (members × pixels); prints the reconstruction SRE.
    #[arg(long, value_name = "CSV")]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub prune: PruneOpts,
    /// Correlation floor for the refinement radius; defaults to the pruning radius.
    #[arg(long)]
    pub danser_alpha: Option<f64>,
    /// Refinement radius, overriding --danser-alpha.
    #[arg(long, conflicts_with = "danser_alpha")]
    pub danser_epsilon: Option<f64>,
    /// Starting abundances of the refinement.
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[command(flatten)]
    pub solver: SolverOpts,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Where the clean spectra come from: a CSV file or the built-in generator.
#[derive(Debug, Clone, Args)]
pub struct LibraryOpts {
    /// Clean library CSV; when omitted a synthetic library is generated.
    #[arg(long, value_name = "CSV")]
    pub dictionary: Option<PathBuf>,
    /// Bands of the synthetic library.
    #[arg(long)]
    pub bands: Option<usize>,
    /// Members of the synthetic library.
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub library_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SceneOpts {
    /// Number of materials N.
    #[arg(long)]
    pub materials: Option<usize>,
    #[arg(long)]
    pub pixels: Option<usize>,
    /// Library-to-mismatch ratio in dB (`inf` disables the perturbation).
    #[arg(long)]
    pub dmer_db: Option<f64>,
    /// Signal-to-noise ratio in dB (`inf` disables the noise).
    #[arg(long)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub library: LibraryOpts,
    #[command(flatten)]
    pub scene: SceneOpts,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub library: LibraryOpts,
    #[command(flatten)]
    pub scene: SceneOpts,
    /// Swept parameter: dmer_db, snr_db, N or keep.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Trial i uses scene seed base_seed + i.
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long, env = "UNMIX_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixed subspace dimension; the true N when omitted.
    #[arg(long)]
    pub order: Option<usize>,
    #[command(flatten)]
    pub solver: SolverOpts,
    /// At or below this SNR the low-SNR λ pair is used; `none` disables the switch.
    #[arg(long)]
    pub low_snr_threshold_db: Option<String>,
    #[arg(long)]
    pub lambda_low_snr: Option<f64>,
    #[arg(long)]
    pub csr_lambda_low_snr: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_input_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => config::ConfigFile::load(path),
        None => Ok(config::ConfigFile::default()),
    };
    let outcome = file.and_then(|file| {
        let resolver = config::Resolver::new(file);
        match cli.command {
            Command::Prune(args) => commands::prune(args, resolver),
            Command::Unmix(args) => commands::unmix(args, resolver),
            Command::Simulate(args) => commands::simulate(args, resolver),
            Command::Benchmark(args) => commands::benchmark(args, resolver),
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
