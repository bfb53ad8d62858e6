//! `knng` command-line tool: build, score and benchmark approximate k-NN graphs.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, missing inputs,
//! invalid combinations), 1 on any other failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use knng::exact::{bench_run, exact_graph_cached};
use knng::io::{load_graph, load_vectors, save_graph, write_vectors, VectorFormat};
use knng::theory::{theory_table, TheoryGrid};
use knng::{brute_force_graph, build_graph, graph_accuracy, BuildConfig, BuildStats, Dataset, Metric};

#[derive(Parser, Debug)]
#[command(name = "knng", version, about = "Approximate k-NN graph construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an approximate k-NN graph.
    Build(BuildArgs),
    /// Build the exact graph by brute force.
    Exact(ExactArgs),
    /// Score an approximate graph against an exact one.
    Eval(EvalArgs),
    /// Run a grid of build configurations and tabulate time and accuracy.
    Bench(BenchArgs),
    /// Compare the discovery-probability formulas with Monte-Carlo estimates.
    Theory(TheoryArgs),
    /// Write a seeded Gaussian-mixture dataset.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Vector file (fvecs, bvecs or csv).
    #[arg(long)]
    input: PathBuf,
    /// File format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<VectorFormat>,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Maximum number of random divisions.
    #[arg(long, default_value_t = BuildConfig::DEFAULT_MAX_DIVISIONS)]
    divisions: usize,
    /// Subsets smaller than this are not split further.
    #[arg(long, default_value_t = 500)]
    leaf_size: usize,
    /// Effective rate below which propagation starts.
    #[arg(long, default_value_t = BuildConfig::DEFAULT_TRIGGER)]
    trigger: f64,
    /// Points visited per point during propagation [default: 100 * k].
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    no_propagation: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
    /// Per-division statistics as CSV.
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    approx: PathBuf,
    #[arg(long)]
    exact: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    /// JSON grid of configurations.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Directory for cached exact graphs.
    #[arg(long)]
    exact_cache: Option<PathBuf>,
    /// Seed for configs whose grid leaves it unset.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// JSON grid with keys p, h, l and optionally trials.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    clusters: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    format: Option<VectorFormat>,
}

/// Bench grid file. List-valued keys are crossed.
#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct BenchGrid {
    #[serde(default = "default_k")]
    k: usize,
    #[serde(rename = "M", default = "default_m")]
    m: Vec<usize>,
    /// Empty means `100 * k`.
    #[serde(rename = "T", default)]
    t: Vec<usize>,
    #[serde(default = "default_trigger")]
    trigger: Vec<f64>,
    #[serde(default = "default_propagation")]
    propagation: Vec<bool>,
    #[serde(default = "default_leaf_size")]
    leaf_size: usize,
    seed: Option<u64>,
}

fn default_k() -> usize {
    10
}
fn default_m() -> Vec<usize> {
    vec![BuildConfig::DEFAULT_MAX_DIVISIONS]
}
fn default_trigger() -> Vec<f64> {
    vec![BuildConfig::DEFAULT_TRIGGER]
}
fn default_propagation() -> Vec<bool> {
    vec![true]
}
fn default_leaf_size() -> usize {
    500
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct TheoryGridFile {
    p: Vec<f64>,
    h: Vec<u32>,
    l: Vec<u32>,
    #[serde(default = "default_trials")]
    trials: u64,
}

fn default_trials() -> u64 {
    100_000
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(knng::Error),
}

impl From<knng::Error> for CliError {
    fn from(e: knng::Error) -> Self {
        match &e {
            knng::Error::InvalidInput(_) => CliError::Usage(e.to_string()),
            knng::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Run(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        knng::Error::from(e).into()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Theory(a) => cmd_theory(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn effective_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    println!("seed: {seed}");
    seed
}

fn resolve_format(path: &Path, format: Option<VectorFormat>) -> CliResult<VectorFormat> {
    format.or_else(|| VectorFormat::from_path(path)).ok_or_else(|| {
        CliError::Usage(format!(
            "cannot infer the format of {}; pass --format",
            path.display()
        ))
    })
}

fn load_input(input: &InputArgs) -> CliResult<Dataset> {
    let format = resolve_format(&input.input, input.format)?;
    Ok(load_vectors(&input.input, format, input.metric)?)
}

fn check_k(k: usize, dataset: &Dataset) -> CliResult {
    if k == 0 || k >= dataset.n() {
        return Err(CliError::Usage(format!(
            "--k must be in [1, {}) for n = {}",
            dataset.n(),
            dataset.n()
        )));
    }
    Ok(())
}

fn cmd_build(a: BuildArgs) -> CliResult {
    let dataset = load_input(&a.input)?;
    check_k(a.k, &dataset)?;
    let seed = effective_seed(a.seed);
    let mut cfg = BuildConfig::new(a.k)
        .with_seed(seed)
        .with_divisions(a.divisions)
        .with_leaf_size(a.leaf_size)
        .with_propagation(!a.no_propagation);
    cfg.trigger_threshold = a.trigger;
    if let Some(t) = a.budget {
        cfg.propagation_budget = t;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let (graph, stats) = build_graph(&dataset, &cfg)?;
    save_graph(&a.output, &graph, dataset.metric(), dataset.digest())?;
    if let Some(path) = &a.stats_out {
        write_stats(path, &stats)?;
    }
    print_summary(&stats);
    Ok(())
}

fn write_stats(path: &Path, stats: &BuildStats) -> CliResult {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "division",
        "new_pairs",
        "cumulative_pairs",
        "effective_rate",
        "seconds",
        "distance_computations",
    ])?;
    for r in &stats.divisions {
        w.write_record([
            r.index.to_string(),
            r.new_pairs.to_string(),
            r.cumulative_pairs.to_string(),
            r.effective_rate.to_string(),
            r.wall_time.to_string(),
            r.distance_computations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn print_summary(stats: &BuildStats) {
    println!("divisions: {}", stats.divisions_run());
    match stats.propagation_triggered_at {
        Some(m) => println!("propagation triggered after division {m}"),
        None => println!("propagation not triggered"),
    }
    if let Some(p) = &stats.propagation {
        println!(
            "propagation: {} points visited, {} new pairs, {:.3}s",
            p.visited, p.new_pairs, p.wall_time
        );
    }
    println!(
        "distance computations: {} (cache hits {})",
        stats.cache_misses, stats.cache_hits
    );
    println!("wall time: {:.3}s", stats.wall_time);
}

fn cmd_exact(a: ExactArgs) -> CliResult {
    let dataset = load_input(&a.input)?;
    check_k(a.k, &dataset)?;
    let graph = brute_force_graph(&dataset, a.k)?;
    save_graph(&a.output, &graph, dataset.metric(), dataset.digest())?;
    println!("exact graph: n = {}, k = {}", graph.n(), graph.k());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let approx = load_graph(&a.approx)?;
    let exact = load_graph(&a.exact)?;
    if approx.header.digest != exact.header.digest {
        return Err(CliError::Usage(
            "the two graphs were built from different datasets".into(),
        ));
    }
    let accuracy = graph_accuracy(&approx.graph, &exact.graph)?;
    println!("{accuracy:.6}");
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let file = File::open(path)?;
    serde_json::from_reader(file)
        .map_err(|e| CliError::Usage(format!("bad grid file {}: {e}", path.display())))
}

fn expand_grid(grid: &BenchGrid, seed: u64) -> Vec<BuildConfig> {
    let budgets = if grid.t.is_empty() {
        vec![100 * grid.k]
    } else {
        grid.t.clone()
    };
    let mut configs = Vec::new();
    for &m in &grid.m {
        for &t in &budgets {
            for &trigger in &grid.trigger {
                for &propagation in &grid.propagation {
                    let mut cfg = BuildConfig::new(grid.k)
                        .with_seed(seed)
                        .with_divisions(m)
                        .with_leaf_size(grid.leaf_size)
                        .with_propagation(propagation);
                    cfg.propagation_budget = t;
                    cfg.trigger_threshold = trigger;
                    configs.push(cfg);
                }
            }
        }
    }
    configs
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    let grid: BenchGrid = read_json(&a.grid)?;
    let dataset = load_input(&a.input)?;
    check_k(grid.k, &dataset)?;
    let seed = effective_seed(grid.seed.or(a.seed));
    let configs = expand_grid(&grid, seed);
    for cfg in &configs {
        cfg.validate()?;
    }
    let exact = match &a.exact_cache {
        Some(dir) => {
            let (graph, cached) = exact_graph_cached(&dataset, grid.k, dir)?;
            if cached {
                println!("exact graph loaded from {}", dir.display());
            }
            graph
        }
        None => brute_force_graph(&dataset, grid.k)?,
    };
    let rows = bench_run(&dataset, &configs, &exact)?;

    let mut w = csv::Writer::from_path(&a.output)?;
    w.write_record([
        "config_id",
        "M",
        "T",
        "trigger",
        "k",
        "seconds",
        "accuracy",
        "divisions_run",
        "propagation",
    ])?;
    for r in &rows {
        w.write_record([
            r.config_id.to_string(),
            r.max_divisions.to_string(),
            r.budget.to_string(),
            r.trigger.to_string(),
            r.k.to_string(),
            format!("{:.6}", r.seconds),
            format!("{:.6}", r.accuracy),
            r.divisions_run.to_string(),
            r.propagation.to_string(),
        ])?;
    }
    w.flush()?;
    println!("{} configurations written to {}", rows.len(), a.output.display());
    Ok(())
}

fn cmd_theory(a: TheoryArgs) -> CliResult {
    let file: TheoryGridFile = read_json(&a.grid)?;
    let seed = effective_seed(a.seed);
    let grid = TheoryGrid {
        p: file.p,
        h: file.h,
        l: file.l,
        trials: file.trials,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = theory_table(&grid, &mut rng)?;

    let mut w = csv::Writer::from_path(&a.output)?;
    w.write_record([
        "quantity", "p", "h", "l", "formula", "simulated", "std_err", "z_score",
    ])?;
    let mut outside = 0;
    for r in &rows {
        let z = r.z_score();
        if z.abs() > 3.0 {
            outside += 1;
        }
        w.write_record([
            r.quantity.to_string(),
            r.p.to_string(),
            r.h.to_string(),
            r.l.to_string(),
            r.formula.to_string(),
            r.simulated.to_string(),
            r.std_err.to_string(),
            format!("{z:.3}"),
        ])?;
    }
    w.flush()?;
    println!("{} rows, {outside} outside 3 standard errors", rows.len());
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CliResult {
    if a.n < 2 || a.d == 0 {
        return Err(CliError::Usage("need --n >= 2 and --d >= 1".into()));
    }
    let format = resolve_format(&a.output, a.format)?;
    let seed = effective_seed(a.seed);
    let points = knng::synth::gaussian_mixture_points(a.n, a.d, a.clusters, seed)?;
    write_vectors(&a.output, format, &points, a.d)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "wrote {} vectors of dimension {}", a.n, a.d)?;
    Ok(())
}
