//! `idlora`: parameter audits, clustering, theory checks, training and
//! gradient checks for clustered interpolative low-rank adapters.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use idlora_core::train::OptimizerKind;
use idlora_core::{Error, Method};

#[derive(Debug, Parser)]
#[command(name = "idlora", version, about = "Clustered interpolative low-rank adapters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact trainable-parameter counts over an architecture descriptor.
    CountParams(CountArgs),
    /// Writes a seeded random matrix file.
    MakeMatrix(MakeMatrixArgs),
    /// Size-constrained k-means over the rows of a matrix file.
    Cluster(ClusterArgs),
    /// Clusters rows and writes the per-cluster frozen bases.
    Basis(BasisArgs),
    /// Clustered versus global low-rank reconstruction over seeded ensembles.
    VerifyTheorem1(StudyArgs),
    /// Cluster-local versus global CUR pivots on one ensemble.
    VerifyTheorem2(StudyArgs),
    /// Fits adapters on synthetic clustered multi-task data.
    Train(TrainArgs),
    /// Analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Scores a saved adapter on regenerated synthetic data.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Built-in descriptor name.
    #[arg(long, default_value = "llama3-8b")]
    pub arch: String,
    /// Descriptor TOML file; overrides --arch.
    #[arg(long)]
    pub arch_file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "lora")]
    pub method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub rank: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 2)]
    pub split: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeMatrixArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    /// Product of two Gaussian factors of this inner size; 0 draws a dense matrix.
    #[arg(long, default_value_t = 0)]
    pub rank: usize,
    /// Writes the identity instead of random values (square only).
    #[arg(long)]
    pub identity: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub clusters: usize,
    #[arg(long, default_value_t = 1)]
    pub min_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub clusters: usize,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study TOML file; built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ensembles (reconstruction) or pivot trials (CUR study).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run TOML with `[data]`, `[train]` and `[[adapter]]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub split: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss history CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Adapter file; needs exactly one adapter.
    #[arg(long)]
    pub save_adapter: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "idlora,lora,moelora")]
    pub method: Vec<Method>,
    #[arg(long, default_value_t = 10)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub d_in: usize,
    #[arg(long, default_value_t = 12)]
    pub d_out: usize,
    #[arg(long, default_value_t = 4)]
    pub rank: usize,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 2)]
    pub split: usize,
    #[arg(long, default_value_t = idlora_core::train::DEFAULT_FD_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub adapter: PathBuf,
    /// Run TOML whose `[data]` table regenerates the data set.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
    }
}

/// 0 success, 1 check failed, 2 input or format error, 3 configuration error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Input(_) | Error::Format(_) | Error::Shape(_) | Error::Index(_) | Error::Io(_) => 2,
        Error::Config(_) | Error::Parameter(_) | Error::Registry(_) | Error::Constraint(_) | Error::Capacity(_) => 3,
        Error::Training { .. } => 1,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("IDLORA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("IDLORA_THREADS must be a positive integer, got `{raw}`")))?;
    if n == 0 {
        return Err(Error::Config("IDLORA_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::CountParams(a) => commands::count_params(a),
        Command::MakeMatrix(a) => commands::make_matrix(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Basis(a) => commands::basis(a),
        Command::VerifyTheorem1(a) => commands::verify_reconstruction(a),
        Command::VerifyTheorem2(a) => commands::verify_pivots(a),
        Command::Train(a) => commands::train(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Eval(a) => commands::eval(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
