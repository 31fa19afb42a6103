use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use netsmooth::config::ExperimentConfig;
use netsmooth::harness::{self, ResultsReadError};
use netsmooth::multiverse::{self, Variant};
use netsmooth::{io, report};

#[derive(Parser)]
#[command(
    name = "netsmooth",
    version,
    about = "Peer-effect estimation on mismeasured networks"
)]
struct Cli {
    /// Raise log verbosity (repeatable). NETSMOOTH_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment; writes results.csv and summary.json.
    Simulate(SimulateArgs),
    /// Multiverse analysis of an observed network; writes multiverse.csv
    /// and nodes.csv.
    Analyze(AnalyzeArgs),
    /// Plot-ready tables from a results file.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full eight-point size grid.
    #[arg(long)]
    full_grid: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Edge list with header `src,dst[,weight]`.
    #[arg(long)]
    edges: PathBuf,
    /// Node table: node ID first, then the outcome and covariate columns.
    #[arg(long)]
    nodes: PathBuf,
    /// Name of the outcome column in the node table.
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    out: PathBuf,
    /// Treat edges as directed (row = sender).
    #[arg(long)]
    directed: bool,
    #[arg(long, default_value_t = 2)]
    d_min: usize,
    #[arg(long, default_value_t = 25)]
    d_max: usize,
    /// Comma-separated subset of peer-no-x, peer-x, latent-no-x, latent-x.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV from `simulate`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Multiverse table from `analyze`.
    #[arg(long)]
    multiverse: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes with distinct exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut config =
        ExperimentConfig::from_path(&args.config).map_err(|e| Failure::Usage(e.into()))?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if args.full_grid {
        config.full_grid = true;
    }
    config.validate().map_err(|e| Failure::Usage(e.into()))?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    log::info!(
        "simulating {} sizes x {} reps on {workers} workers",
        config.grid().len(),
        config.reps
    );
    let rows = harness::run_experiment(&config, workers)?;
    let failed = rows.iter().filter(|r| r.failed).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows come from failed fits", rows.len());
    }
    harness::write_results(&rows, create(&args.out.join("results.csv"))?)?;
    let summary = harness::summarize(&rows);
    serde_json::to_writer_pretty(create(&args.out.join("summary.json"))?, &summary)?;
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let edges = io::read_edge_list(&args.edges)?;
    let table = io::read_node_table(&args.nodes, &args.outcome)?;
    if table.incomplete > 0 {
        log::warn!("dropped {} node rows with missing values", table.incomplete);
    }
    let aligned = io::align(&edges, &table, args.directed)?;
    if aligned.dropped_nodes > 0 {
        log::warn!(
            "dropped {} nodes without complete node data",
            aligned.dropped_nodes
        );
    }
    let variants = args
        .variants
        .clone()
        .unwrap_or_else(|| Variant::ALL.to_vec());
    let output = multiverse::run_multiverse(&aligned.input, args.d_min, args.d_max, &variants)
        .map_err(Failure::Usage)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    multiverse::write_multiverse(&output.rows, create(&args.out.join("multiverse.csv"))?)?;
    io::write_nodes(&aligned.ids, create(&args.out.join("nodes.csv"))?)?;
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let file =
        File::open(&args.input).with_context(|| format!("cannot open {}", args.input.display()))?;
    let rows = harness::read_results(file).map_err(|e| match e {
        ResultsReadError::Csv(_) => Failure::Runtime(e.into()),
        _ => Failure::Usage(e.into()),
    })?;
    let summary = harness::summarize(&rows);
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    report::write_mse_by_n(&summary, create(&args.out.join("mse_by_n.csv"))?)?;
    report::write_coverage(&summary, create(&args.out.join("coverage.csv"))?)?;
    serde_json::to_writer_pretty(create(&args.out.join("summary.json"))?, &summary)?;
    if let Some(path) = &args.multiverse {
        let input = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        report::write_multiverse_ci(input, create(&args.out.join("multiverse_ci.csv"))?)
            .map_err(Failure::Usage)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NETSMOOTH_LOG", default_level))
        .init();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
