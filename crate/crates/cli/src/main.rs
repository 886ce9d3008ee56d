use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use dirpart::datasets::{gen_gmm, gen_moons, gen_sphere_points, sphere_spec, DatasetSpec, MOON_NOISE};
use dirpart::dirichlet::{brute_force_partition_with_budget, partition_objective, DEFAULT_BRUTE_FORCE_BUDGET};
use dirpart::graph::{gaussian_similarity, lattice_graph, parse_lattice, symmetrize};
use dirpart::io;
use dirpart::metrics::{confusion, purity};
use dirpart::rearrangement::{
    relaxed_energy_with, resolve_alpha, run_with_alpha, AlphaPolicy, InitStrategy, RunConfig, RunReport,
};
use dirpart::{Metric, PointCloud, SimilarityGraph};

const SWEEP_WARNING: &str = "energies are not comparable across alpha";

#[derive(Parser, Debug)]
#[command(name = "dirpart", version, about = "Graph partitioning by Dirichlet eigenvalue minimization")]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads; defaults to all cores
    #[arg(long, env = "DP_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partition a graph with the rearrangement iteration
    Partition(PartitionArgs),
    /// Compare predicted labels against ground truth
    Eval(EvalArgs),
    /// Exact optimum by exhaustive search on small graphs
    Oracle(OracleArgs),
    /// Run or evaluate over a grid of alpha values
    Sweep(SweepArgs),
    /// Generate a synthetic dataset
    Gen(GenArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
#[group(skip)]
#[command(group(ArgGroup::new("input").required(true).args(["points", "similarity", "lattice"])))]
struct GraphInput {
    /// Point cloud CSV; a Gaussian kernel graph is built from it
    #[arg(long)]
    points: Option<PathBuf>,

    /// Symmetric similarity matrix in Matrix Market format
    #[arg(long)]
    similarity: Option<PathBuf>,

    /// Lattice graph, e.g. path:10, grid:4x5, torus:30x30
    #[arg(long)]
    lattice: Option<String>,

    /// Kernel width for point inputs
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Distance used for point inputs
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MetricArg {
    Euclidean,
    Sphere,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum InitArg {
    Random,
    Voronoi,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Number of clusters
    #[arg(long)]
    k: usize,

    /// Degree exponent of the Laplacian D^{-r}(D - W)
    #[arg(long, default_value_t = 1.0)]
    r: f64,

    /// Eigensolver relative residual tolerance
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,

    #[arg(long, default_value_t = 100)]
    max_iter: usize,

    #[arg(long, default_value_t = 1)]
    restarts: usize,

    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// CSV of vertex,label pairs to pin
    #[arg(long)]
    semi_labels: Option<PathBuf>,

    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[command(flatten)]
    input: GraphInput,

    #[command(flatten)]
    solver: SolverArgs,

    /// Explicit alpha
    #[arg(long, conflicts_with = "alpha_scale")]
    alpha: Option<f64>,

    /// alpha as a multiple of lambda_2; defaults to k
    #[arg(long)]
    alpha_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted labels CSV
    #[arg(long)]
    pred: PathBuf,

    /// Ground-truth labels CSV
    #[arg(long)]
    truth: PathBuf,

    #[command(flatten)]
    input: GraphInput,

    #[arg(long, default_value_t = 1.0)]
    r: f64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    input: GraphInput,

    #[arg(long)]
    k: usize,

    #[arg(long, default_value_t = 1.0)]
    r: f64,

    /// Largest admissible k^n
    #[arg(long, default_value_t = DEFAULT_BRUTE_FORCE_BUDGET)]
    budget: u128,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: GraphInput,

    #[command(flatten)]
    solver: SolverArgs,

    /// Comma-separated alpha values
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    alpha_grid: Vec<f64>,

    /// Read the grid as multiples of lambda_2
    #[arg(long)]
    scale: bool,

    /// Evaluate the relaxed energy of this fixed labeling instead of iterating
    #[arg(long)]
    fixed_labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(subcommand)]
    dataset: Dataset,

    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Dataset {
    /// Isotropic Gaussian clouds
    Gmm {
        /// Points per cloud, comma-separated
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Cloud centers separated by ';', coordinates by ','
        #[arg(long)]
        means: String,
        #[arg(long, default_value_t = 1.0)]
        std_dev: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Interleaved half-circles
    Moons {
        #[arg(long, default_value_t = 5)]
        n_moons: usize,
        #[arg(long, default_value_t = 300)]
        n_per_moon: usize,
        #[arg(long, default_value_t = MOON_NOISE)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Quasi-uniform points on the unit sphere
    Sphere {
        #[arg(long, default_value_t = 4000)]
        n: usize,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<dirpart::Error> for Failure {
    fn from(e: dirpart::Error) -> Self {
        match e {
            dirpart::Error::AllRestartsFailed { .. } => Failure::Solver(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

/// Successful outcome of a command.
enum Outcome {
    Converged,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::Partition(args) => cmd_partition(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: max_iter reached without convergence");
            ExitCode::from(2)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

/// A loaded graph and, for point inputs, its coordinates.
struct LoadedGraph {
    graph: SimilarityGraph,
    points: Option<PointCloud>,
}

fn load_graph(input: &GraphInput) -> anyhow::Result<LoadedGraph> {
    if let Some(path) = &input.points {
        let metric = match input.metric {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Sphere => Metric::SphereGeodesic,
        };
        let points = io::read_points_csv(path, metric)?;
        let graph = gaussian_similarity(&points, input.sigma)?;
        info!("built kernel graph on {} points, {} edges", graph.n(), graph.edge_count());
        Ok(LoadedGraph {
            graph,
            points: Some(points),
        })
    } else if let Some(path) = &input.similarity {
        let graph = symmetrize(&io::read_matrix_market(path)?)?;
        Ok(LoadedGraph { graph, points: None })
    } else if let Some(spec) = &input.lattice {
        let (kind, dims) = parse_lattice(spec)?;
        Ok(LoadedGraph {
            graph: lattice_graph(kind, &dims)?,
            points: None,
        })
    } else {
        bail!("one of --points, --similarity or --lattice is required")
    }
}

fn base_config(solver: &SolverArgs, n: usize) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::new(solver.k, solver.r);
    cfg.tol = solver.tol;
    cfg.max_iter = solver.max_iter;
    cfg.restarts = solver.restarts;
    cfg.seed = solver.seed;
    cfg.init = match solver.init {
        InitArg::Random => InitStrategy::Random,
        InitArg::Voronoi => InitStrategy::Voronoi,
    };
    if let Some(path) = &solver.semi_labels {
        let pairs = io::read_label_pairs(path)?;
        let mut pinned = BTreeMap::new();
        for (v, l) in pairs {
            if pinned.insert(v, l).is_some() {
                bail!("{}: vertex {v} is listed twice", path.display());
            }
        }
        cfg.supervision = pinned;
    }
    cfg.validate(n)?;
    Ok(cfg)
}

/// Writes every file under `dir` only once all contents are ready.
fn write_outputs(dir: &Path, files: &[(&str, String)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn labels_csv(labels: &[usize]) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    io::write_labels_csv_to(&mut buf, labels)?;
    Ok(String::from_utf8(buf)?)
}

fn confidences_csv(report: &RunReport, points: Option<&PointCloud>) -> String {
    let mut out = String::from("vertex");
    let dim = points.map_or(0, PointCloud::dim);
    for d in 0..dim {
        write!(out, ",x{d}").unwrap();
    }
    out.push_str(",label");
    for i in 0..report.k {
        write!(out, ",psi{i}").unwrap();
    }
    out.push('\n');
    for (v, &label) in report.labels.iter().enumerate() {
        write!(out, "{v}").unwrap();
        if let Some(p) = points {
            for x in p.point(v) {
                write!(out, ",{x}").unwrap();
            }
        }
        write!(out, ",{label}").unwrap();
        for psi in &report.confidences {
            write!(out, ",{}", psi[v]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Fully resolved configuration echoed into reports.
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'static str,
    input: &'a GraphInput,
    n: usize,
    run: &'a RunConfig,
}

#[derive(Serialize)]
struct PartitionReport<'a> {
    config: ResolvedConfig<'a>,
    #[serde(flatten)]
    report: &'a RunReport,
}

fn cmd_partition(args: PartitionArgs) -> Result<Outcome, Failure> {
    let started = Instant::now();
    let loaded = load_graph(&args.input)?;
    let n = loaded.graph.n();
    let mut cfg = base_config(&args.solver, n)?;
    cfg.alpha = match (args.alpha, args.alpha_scale) {
        (Some(a), _) => AlphaPolicy::Explicit(a),
        (None, Some(c)) => AlphaPolicy::Scale(c),
        (None, None) => AlphaPolicy::Scale(cfg.k as f64),
    };
    cfg.validate(n)?;
    let alpha = resolve_alpha(cfg.alpha, &loaded.graph, cfg.r)?;
    let mut report = run_with_alpha(&loaded.graph, &cfg, alpha)?;
    report.wall_time_s = started.elapsed().as_secs_f64();

    let json = to_json(&PartitionReport {
        config: ResolvedConfig {
            command: "partition",
            input: &args.input,
            n,
            run: &cfg,
        },
        report: &report,
    })?;
    write_outputs(
        &args.solver.out,
        &[
            ("report.json", json),
            ("labels.csv", labels_csv(&report.labels)?),
            ("confidences.csv", confidences_csv(&report, loaded.points.as_ref())),
        ],
    )?;
    println!(
        "energy {:.10e} after {} iteration(s), sizes {:?}",
        report.energy(),
        report.iterations,
        report.cluster_sizes()
    );
    Ok(if report.converged {
        Outcome::Converged
    } else {
        Outcome::NotConverged
    })
}

#[derive(Serialize)]
struct EvalReport {
    n: usize,
    r: f64,
    purity: f64,
    confusion: dirpart::metrics::ConfusionMatrix,
    found_objective: f64,
    found_per_cluster: Vec<f64>,
    truth_objective: f64,
    truth_per_cluster: Vec<f64>,
}

fn cluster_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}

fn cmd_eval(args: EvalArgs) -> Result<Outcome, Failure> {
    let loaded = load_graph(&args.input)?;
    let n = loaded.graph.n();
    let pred = io::read_labels(&args.pred, n)?;
    let truth = io::read_labels(&args.truth, n)?;
    let found = partition_objective(&loaded.graph, args.r, &pred, cluster_count(&pred))
        .context("objective of the predicted labels")?;
    let reference = partition_objective(&loaded.graph, args.r, &truth, cluster_count(&truth))
        .context("objective of the true labels")?;
    let report = EvalReport {
        n,
        r: args.r,
        purity: purity(&pred, &truth)?,
        confusion: confusion(&pred, &truth)?,
        found_objective: found.total,
        found_per_cluster: found.per_cluster,
        truth_objective: reference.total,
        truth_per_cluster: reference.per_cluster,
    };
    let mut table = String::from("pred_label");
    for t in &report.confusion.true_labels {
        write!(table, ",true{t}").unwrap();
    }
    table.push('\n');
    for (p, row) in report.confusion.pred_labels.iter().zip(&report.confusion.entries) {
        write!(table, "{p}").unwrap();
        for x in row {
            write!(table, ",{x}").unwrap();
        }
        table.push('\n');
    }
    write_outputs(&args.out, &[("eval.json", to_json(&report)?), ("confusion.csv", table)])?;
    println!(
        "purity {:.4}, found objective {:.6}, ground truth objective {:.6}",
        report.purity, report.found_objective, report.truth_objective
    );
    Ok(Outcome::Converged)
}

#[derive(Serialize)]
struct OracleReport {
    n: usize,
    k: usize,
    r: f64,
    objective: f64,
    per_cluster: Vec<f64>,
    evaluated: usize,
    labels: Vec<usize>,
}

fn cmd_oracle(args: OracleArgs) -> Result<Outcome, Failure> {
    let loaded = load_graph(&args.input)?;
    let best = brute_force_partition_with_budget(&loaded.graph, args.r, args.k, args.budget)?;
    let report = OracleReport {
        n: loaded.graph.n(),
        k: args.k,
        r: args.r,
        objective: best.objective,
        per_cluster: best.per_cluster,
        evaluated: best.evaluated,
        labels: best.labels,
    };
    write_outputs(
        &args.out,
        &[("oracle.json", to_json(&report)?), ("labels.csv", labels_csv(&report.labels)?)],
    )?;
    println!("optimum {:.10e} over {} partitions", report.objective, report.evaluated);
    Ok(Outcome::Converged)
}

/// One row of the sweep table.
struct SweepRow {
    alpha: f64,
    energy: f64,
    iterations: Option<usize>,
    converged: bool,
    sizes: Vec<usize>,
}

fn fixed_energy(graph: &SimilarityGraph, cfg: &RunConfig, alpha: f64, labels: &[usize]) -> anyhow::Result<f64> {
    let mut total = 0.0;
    for i in 0..cfg.k {
        let phi: Vec<f64> = labels.iter().map(|&l| if l == i { 1.0 } else { 0.0 }).collect();
        total += relaxed_energy_with(graph, cfg.r, alpha, &phi, cfg.tol, cfg.max_matvecs)?.lambda;
    }
    Ok(total)
}

fn cmd_sweep(args: SweepArgs) -> Result<Outcome, Failure> {
    if args.alpha_grid.is_empty() {
        return Err(Failure::Input(anyhow::anyhow!("--alpha-grid is empty")));
    }
    let loaded = load_graph(&args.input)?;
    let graph = &loaded.graph;
    let n = graph.n();
    let cfg = base_config(&args.solver, n)?;
    let lambda2 = if args.scale {
        Some(resolve_alpha(AlphaPolicy::Scale(1.0), graph, cfg.r)?)
    } else {
        None
    };
    let alphas: Vec<f64> = args
        .alpha_grid
        .iter()
        .map(|&a| lambda2.map_or(a, |l| a * l))
        .collect();
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Failure::Input(anyhow::anyhow!("alpha values must be positive, got {a}")));
    }

    let fixed = match &args.fixed_labels {
        Some(path) => {
            let labels = io::read_labels(path, n)?;
            dirpart::dirichlet::validate_labels(&labels, n, cfg.k)?;
            Some(labels)
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let row = match &fixed {
            Some(labels) => {
                let mut sizes = vec![0; cfg.k];
                labels.iter().for_each(|&l| sizes[l] += 1);
                SweepRow {
                    alpha,
                    energy: fixed_energy(graph, &cfg, alpha, labels)?,
                    iterations: None,
                    converged: true,
                    sizes,
                }
            }
            None => {
                let report = run_with_alpha(graph, &cfg, alpha)?;
                SweepRow {
                    alpha,
                    energy: report.energy(),
                    iterations: Some(report.iterations),
                    converged: report.converged,
                    sizes: report.cluster_sizes(),
                }
            }
        };
        info!("alpha {alpha:.6e}: energy {:.10e}", row.energy);
        rows.push(row);
    }

    let mut table = String::from("alpha,alpha_over_lambda2,energy,iterations,converged,sizes,warning\n");
    for row in &rows {
        let scaled = lambda2.map_or(String::new(), |l| (row.alpha / l).to_string());
        let iterations = row.iterations.map_or(String::new(), |i| i.to_string());
        let sizes: Vec<String> = row.sizes.iter().map(usize::to_string).collect();
        writeln!(
            table,
            "{},{scaled},{},{iterations},{},{},{SWEEP_WARNING}",
            row.alpha,
            row.energy,
            row.converged,
            sizes.join(";")
        )
        .unwrap();
    }
    write_outputs(&args.solver.out, &[("sweep.csv", table)])?;
    println!("{} alpha value(s) evaluated; {SWEEP_WARNING}", rows.len());
    Ok(if rows.iter().all(|r| r.converged) {
        Outcome::Converged
    } else {
        Outcome::NotConverged
    })
}

fn parse_means(text: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|m| {
            m.split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad coordinate {x:?}")))
                .collect()
        })
        .collect()
}

fn cmd_gen(args: GenArgs) -> Result<Outcome, Failure> {
    let (points, labels, spec): (PointCloud, Option<Vec<usize>>, DatasetSpec) = match args.dataset {
        Dataset::Gmm {
            sizes,
            means,
            std_dev,
            seed,
        } => {
            let data = gen_gmm(&sizes, &parse_means(&means)?, std_dev, seed)?;
            (data.points, Some(data.labels), data.spec)
        }
        Dataset::Moons {
            n_moons,
            n_per_moon,
            noise,
            seed,
        } => {
            let data = gen_moons(n_moons, n_per_moon, noise, seed)?;
            (data.points, Some(data.labels), data.spec)
        }
        Dataset::Sphere { n } => (gen_sphere_points(n)?, None, sphere_spec(n)),
    };
    let mut buf = Vec::new();
    io::write_points_csv_to(&mut buf, &points)?;
    let points_csv = String::from_utf8(buf).context("points CSV")?;
    let mut files = vec![("points.csv", points_csv), ("dataset.json", to_json(&spec)?)];
    if let Some(labels) = &labels {
        files.push(("labels.csv", labels_csv(labels)?));
    }
    write_outputs(&args.out, &files)?;
    println!("wrote {} points to {}", points.len(), args.out.display());
    Ok(Outcome::Converged)
}
