//! Command-line driver for generating instances, bounding them, scanning
//! pairwise merges, solving, and clustering experiments.

mod report;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pbskit", version, about = "Disjunctive-program bounding toolkit")]
struct Cli {
    #[command(subcommand)]
    task: Task,
}

#[derive(Subcommand)]
enum Task {
    /// Generate a random disjunctive program as instance JSON.
    Gen(GenArgs),
    /// Generate a normalized clustering point cloud as CSV.
    GenPoints(GenPointsArgs),
    /// Emit the built-in two-variable worked example.
    Example(ExampleArgs),
    /// Maximize the decomposed relaxation over multipliers.
    Dual(DualArgs),
    /// Compute a partition relaxation, optionally with the full bound chain.
    Prelax(PrelaxArgs),
    /// Evaluate every pairwise merge and rank by bound improvement.
    PbsScan(PbsScanArgs),
    /// Solve a program to global optimality.
    Solve(SolveArgs),
    /// Cluster points with seeded replications (upper bound).
    KmeansUb(KmeansUbArgs),
    /// Sum exact per-block clustering optima (lower bound).
    KmeansLb(KmeansLbArgs),
    /// Write a clustering model in LP text format.
    Export(ExportArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Number of variables.
    #[arg(long)]
    pub n: usize,
    /// Number of disjunctions.
    #[arg(long = "K")]
    pub k: usize,
    /// Disjuncts per disjunction.
    #[arg(long = "D")]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenPointsArgs {
    /// Number of points.
    #[arg(long)]
    pub n: usize,
    /// Coordinates per point.
    #[arg(long = "D")]
    pub d: usize,
    /// Number of generating blobs.
    #[arg(long = "K")]
    pub k: usize,
    /// Blob standard deviation before normalization.
    #[arg(long, default_value_t = 0.05)]
    pub spread: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExampleArgs {
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DualArgs {
    /// Instance JSON path, or - for stdin.
    #[arg(default_value = "-")]
    pub instance: String,
    /// Starting multipliers JSON; uniform split of c when omitted.
    #[arg(long)]
    pub multipliers: Option<String>,
    /// Ascent iteration budget.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Step rule: diminishing or polyak:<upper bound>.
    #[arg(long, default_value = "diminishing")]
    pub step: String,
    /// Stop when the projected subgradient norm falls below this.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Iterate CSV path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Report JSON path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PrelaxArgs {
    /// Instance JSON path, or - for stdin.
    #[arg(default_value = "-")]
    pub instance: String,
    /// Multipliers JSON; uniform split of c when omitted.
    #[arg(long)]
    pub multipliers: Option<String>,
    /// Partition: singletons, rand:minMerges,maxBlock, or a JSON file.
    #[arg(long, default_value = "singletons")]
    pub partition: String,
    /// Per-block time budget in seconds.
    #[arg(long)]
    pub block_time_limit: Option<f64>,
    /// Per-block cap on subproblem solves.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Also compute the full bound chain around this partition.
    #[arg(long)]
    pub chain: bool,
    /// Skip the global solve inside the chain.
    #[arg(long)]
    pub skip_z_star: bool,
    /// Ascent budget for the chain's dual values.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Worker threads across blocks; 0 keeps the default pool.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PbsScanArgs {
    /// Instance JSON path, or - for stdin.
    #[arg(default_value = "-")]
    pub instance: String,
    /// Multipliers JSON to scan at; found by dual ascent when omitted.
    #[arg(long)]
    pub multipliers: Option<String>,
    /// Ascent budget when multipliers are omitted.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Per-pair time budget in seconds.
    #[arg(long)]
    pub block_time_limit: Option<f64>,
    /// Per-pair cap on subproblem solves.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Worker threads across pairs; 0 keeps the default pool.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Instance JSON path, or - for stdin.
    #[arg(default_value = "-")]
    pub instance: String,
    /// Total time budget in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Cap on subproblem solves.
    #[arg(long)]
    pub node_limit: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct KmeansUbArgs {
    /// Points CSV path, or - for stdin.
    #[arg(default_value = "-")]
    pub points: String,
    /// Cluster count.
    #[arg(long = "K")]
    pub k: usize,
    /// Seeded restarts.
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct KmeansLbArgs {
    /// Points CSV path, or - for stdin.
    #[arg(default_value = "-")]
    pub points: String,
    /// Cluster count.
    #[arg(long = "K")]
    pub k: usize,
    /// Partition: alg1:<blocks>, alg2:<blockSize>, or a JSON file.
    #[arg(long, default_value = "alg2:20")]
    pub partition: String,
    /// Per-block time budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub block_time_limit: f64,
    /// Per-block node cap.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Seeded restarts for the warm start and upper bound.
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// Worker threads across blocks; 0 keeps the default pool.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report JSON path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportArgs {
    /// Points CSV path, or - for stdin.
    #[arg(default_value = "-")]
    pub points: String,
    /// Cluster count.
    #[arg(long = "K")]
    pub k: usize,
    /// Model family: bigm or hull.
    #[arg(long)]
    pub format: String,
    /// Order centroids by their first coordinate.
    #[arg(long)]
    pub symmetry: bool,
    /// Require every cluster to hold at least one point.
    #[arg(long)]
    pub nonempty: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Model text path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Optional stats report JSON path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    // PBSKIT_LOG picks the log level; silent when unset.
    env_logger::Builder::from_env(env_logger::Env::new().filter("PBSKIT_LOG")).init();
    let cli = Cli::parse();
    let result = match &cli.task {
        Task::Gen(args) => tasks::gen(args),
        Task::GenPoints(args) => tasks::gen_points_task(args),
        Task::Example(args) => tasks::example(args.out.as_ref()),
        Task::Dual(args) => tasks::dual(args),
        Task::Prelax(args) => tasks::prelax(args),
        Task::PbsScan(args) => tasks::pbs_scan(args),
        Task::Solve(args) => tasks::solve(args),
        Task::KmeansUb(args) => tasks::kmeans_ub(args),
        Task::KmeansLb(args) => tasks::kmeans_lb(args),
        Task::Export(args) => tasks::export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
