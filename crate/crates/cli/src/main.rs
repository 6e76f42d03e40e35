mod commands;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "polyrom", version, about = "Polytopic autoencoders for reduced-order modelling")]
struct Cli {
    /// Worker threads for polytope-error evaluation; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset and store its snapshots.
    Generate(GenerateArgs),
    /// Fit a POD basis or train a CAE/PAE.
    Train(TrainArgs),
    /// Errors, activation rates and plots of a model on a dataset.
    Eval(EvalArgs),
    /// Averaged relative polytope error of a model on a dataset.
    PolytopeError(PolytopeErrorArgs),
    /// Vertex matrices of the polytopic LPV form of a Burgers system.
    LpvExport(LpvExportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Burgers1d,
    Cycle2d,
}

#[derive(Args, Debug)]
pub struct SeedArg {
    /// Random seed; falls back to POLYROM_SEED, then 0.
    #[arg(long, env = "POLYROM_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    dataset: Dataset,
    /// Grid nodes (burgers1d) or grid side length (cycle2d).
    #[arg(long)]
    n: Option<usize>,
    /// Time steps; the dataset holds steps + 1 snapshots.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Burgers viscosity.
    #[arg(long, default_value_t = 0.01)]
    viscosity: f64,
    /// Number of phase regions of the cycle2d loop.
    #[arg(long, default_value_t = 3)]
    phases: usize,
    /// Training fraction of the leading snapshots.
    #[arg(long, default_value_t = 0.6)]
    train_fraction: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelArg {
    Pod,
    Cae,
    Pae,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    r: usize,
    /// Number of clusters (pae only; defaults to 3).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    data: PathBuf,
    /// Epochs of the three training steps.
    #[arg(long, value_delimiter = ',', default_values_t = [200, 100, 200])]
    epochs: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Weight of the clustering loss.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Evaluate the checkpoint candidate every this many epochs.
    #[arg(long, default_value_t = 1)]
    checkpoint_every: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = polyrom::polytope::DEFAULT_TOL)]
    tol: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PolytopeErrorArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = polyrom::polytope::DEFAULT_TOL)]
    tol: f64,
    /// Also write the value to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LpvExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Snapshot container whose generating Burgers system is exported.
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Invalid flag combination; reported like a clap usage error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli.threads.max(1);
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a, threads),
        Command::PolytopeError(a) => commands::polytope_error(&a),
        Command::LpvExport(a) => commands::lpv_export(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
