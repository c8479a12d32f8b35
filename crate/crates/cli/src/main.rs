//! `regaze`: data generation, party daemons, local runs, cross-validation,
//! benchmarks and audits.
//!
//! Exit codes: 0 success, 2 configuration error, 3 protocol error,
//! 4 numerical failure.

mod commands;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Parser)]
#[command(
    name = "regaze",
    version,
    about = "Private gram matrices and gaze regression"
)]
struct Cli {
    /// Optional TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic eye-landmark dataset.
    Gen(GenArgs),
    /// Run Alice, Bob and the server in one process and train on the result.
    RunLocal(RunLocalArgs),
    /// Run one input party over TCP.
    Party(PartyArgs),
    /// Run the server over TCP, train, and optionally save the model.
    Server(ServerArgs),
    /// Evaluate a saved model on a test dataset.
    Predict(PredictArgs),
    /// Cross-validate SVR hyperparameters on a plaintext dataset.
    Cv(CvArgs),
    /// Timing and accuracy benchmark over dataset sizes.
    Bench(BenchArgs),
    /// Privacy and equivalence audits.
    Audit(AuditArgs),
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a CSV copy.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Rbf,
    Linear,
    Poly,
}

#[derive(Args, Clone, Default)]
pub struct SvrArgs {
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub offset: Option<f64>,
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Choose hyperparameters by 5-fold cross-validation over the default grid.
    #[arg(long)]
    pub cv: bool,
}

#[derive(Args, Clone, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frac_bits: Option<u32>,
    /// Per-message timeout; defaults to REK_TIMEOUT_SECS or 30.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    InProcess,
    Tcp,
}

#[derive(Args)]
pub struct RunLocalArgs {
    #[arg(long)]
    pub alice: Option<PathBuf>,
    #[arg(long)]
    pub bob: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub svr: SvrArgs,
    /// Fraction of each party's rows held out for testing.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TransportArg::InProcess)]
    pub transport: TransportArg,
    /// Also train on the plaintext gram and report its MAE.
    #[arg(long)]
    pub insecure_plaintext: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PartyRole {
    Alice,
    Bob,
}

#[derive(Args)]
pub struct PartyArgs {
    #[arg(long, value_enum)]
    pub role: PartyRole,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub server: Option<String>,
    /// Alice: Bob's address. Bob: address to listen on for Alice.
    #[arg(long)]
    pub peer: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides the session id derived from the seed.
    #[arg(long)]
    pub session_seed: Option<u64>,
}

#[derive(Args)]
pub struct ServerArgs {
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub session_seed: Option<u64>,
    #[command(flatten)]
    pub svr: SvrArgs,
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// The training parties' datasets, to rebuild the training features.
    #[arg(long)]
    pub alice: Option<PathBuf>,
    #[arg(long)]
    pub bob: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub frac_bits: Option<u32>,
    /// Comma-separated gamma values; defaults to 2^-3..2^4.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub cs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "5000,10000,20000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub frac_bits: Option<u32>,
    #[command(flatten)]
    pub svr: SvrArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Use every core instead of pinning the measured path to one thread.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub no_warmup: bool,
    #[arg(long, value_enum, default_value_t = TransportArg::InProcess)]
    pub transport: TransportArg,
}

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::RunConfig::load_optional(cli.config.as_deref())
        .map_err(Failure::config)
        .and_then(|cfg| match cli.command {
            Command::Gen(a) => commands::gen(a),
            Command::RunLocal(a) => commands::run_local(a, &cfg),
            Command::Party(a) => commands::party(a, &cfg),
            Command::Server(a) => commands::server(a, &cfg),
            Command::Predict(a) => commands::predict(a, &cfg),
            Command::Cv(a) => commands::cv(a),
            Command::Bench(a) => commands::bench(a),
            Command::Audit(a) => commands::audit(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
