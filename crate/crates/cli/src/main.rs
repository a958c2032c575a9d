//! Command-line front end: data generation, training, prediction,
//! evaluation, model selection, benchmarking and the replication experiment.
//!
//! Machine-readable output is CSV on stdout (or the `--out` file); logs go
//! to stderr. Exit codes: 0 success, 1 usage or data error, 2 training
//! stopped before convergence (the model is still written).

mod grid;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use kssvm::data::{infer_schema, load_csv, load_features_csv, write_csv};
use kssvm::experiment::{benchmark, run_experiment, BenchmarkOptions, ExperimentOptions};
use kssvm::metrics::harrell_c;
use kssvm::model::{self, GridSearchOptions, KernelChoice, PairMode};
use kssvm::newton::OptimizerOptions;
use kssvm::synth::{generate_replicate, CoeffScale, SynthConfig};
use kssvm::{FeatureSpec, SurvivalDataset};

const THREADS_ENV: &str = "KSSVM_THREADS";

#[derive(Parser)]
#[command(name = "kssvm", version, about = "Kernel survival SVMs")]
struct Cli {
    /// JSON file with `optimizer` options and an optional `threads` count.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    optimizer: OptimizerOptions,
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test replicate.
    SynthGen(SynthArgs),
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Pick γ by repeated random 80/20 splits.
    GridSearch(GridArgs),
    /// Write risk scores (higher = shorter survival).
    Predict(PredictArgs),
    /// Print Harrell's concordance index of a model on labelled data.
    Evaluate(EvaluateArgs),
    /// Time the counting sweep against naive pair summation.
    Benchmark(BenchmarkArgs),
    /// Replicated synthetic study over kernels and pair modes.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1500)]
    n_train: usize,
    #[arg(long, default_value_t = 1500)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coefficient scale in [-1, 1], or `random`.
    #[arg(long, default_value = "random")]
    scale: String,
    #[arg(long, default_value_t = 0.2)]
    censoring: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV with feature columns plus time and event columns.
    #[arg(long)]
    data: PathBuf,
    /// JSON feature schema (as written by `synth-gen`). Without it every
    /// column is continuous unless listed in `--categorical`.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "event")]
    event_col: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "clinical")]
    kernel: String,
    /// RBF bandwidth; defaults to the median pairwise distance.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value = "full")]
    pairs: String,
    #[arg(long)]
    max_newton: Option<usize>,
    #[arg(long)]
    out_model: PathBuf,
    /// Per-iteration optimizer trace as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "clinical")]
    kernel: String,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value = "2^-12..2^12:step2^2")]
    grid: String,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "full")]
    pairs: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV containing (at least) the model's feature columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "event")]
    event_col: String,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Largest n for the Hessian-vector timing.
    #[arg(long, default_value_t = 4000)]
    max_hessvec_n: usize,
    #[arg(long)]
    skip_naive: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 1500)]
    n: usize,
    /// Test-set size; defaults to `--n`.
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "linear,rbf,clinical")]
    kernels: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "full,reduced")]
    pairs: Vec<String>,
    #[arg(long, default_value = "2^-12..2^12:step2^2")]
    grid: String,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Summary CSV destination (stdout by default).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replicate CSV, one row per (replicate, kernel, pair mode).
    #[arg(long)]
    rows_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined with `: `, skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config: Config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => Config::default(),
    };
    config.optimizer.validate()?;
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.parse::<usize>().with_context(|| format!("{THREADS_ENV}={v}"))?),
        Err(_) => config.threads,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }

    match cli.command {
        Command::SynthGen(a) => synth_gen(a),
        Command::Train(a) => train(a, config.optimizer),
        Command::GridSearch(a) => grid_search(a, config.optimizer),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => bench(a),
        Command::Experiment(a) => experiment(a, config.optimizer),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn kernel_choice(name: &str, sigma: Option<f64>) -> Result<KernelChoice> {
    let kernel: KernelChoice = name.parse()?;
    Ok(match (kernel, sigma) {
        (KernelChoice::Rbf { .. }, s) => KernelChoice::Rbf { sigma: s },
        (_, Some(_)) => bail!("--sigma only applies to the rbf kernel"),
        (k, None) => k,
    })
}

fn load_data(a: &DataArgs) -> Result<SurvivalDataset> {
    let schema: Vec<FeatureSpec> = match &a.schema {
        Some(path) => {
            if !a.categorical.is_empty() {
                bail!("use either --schema or --categorical, not both");
            }
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading schema {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing schema {}", path.display()))?
        }
        None => infer_schema(&a.data, &a.time_col, &a.event_col, &a.categorical)?,
    };
    Ok(load_csv(&a.data, &schema, &a.time_col, &a.event_col)?)
}

fn synth_gen(a: SynthArgs) -> Result<ExitCode> {
    let coeff_scale = match a.scale.as_str() {
        "random" => CoeffScale::Random,
        s => CoeffScale::Fixed(s.parse().with_context(|| format!("bad --scale `{s}`"))?),
    };
    let cfg = SynthConfig {
        coeff_scale,
        target_censoring: a.censoring,
        ..SynthConfig::new(a.n_train, a.n_test, a.seed)
    };
    let r = generate_replicate(&cfg)?;
    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_csv(&r.train, a.out_dir.join("train.csv"))?;
    write_csv(&r.test, a.out_dir.join("test.csv"))?;
    let meta = serde_json::json!({
        "seed": a.seed,
        "n_train": a.n_train,
        "n_test": a.n_test,
        "coefficient_scale": r.coefficient_scale,
        "target_censoring": a.censoring,
        "realized_censoring": r.train.censoring_fraction(),
        // JSON has no infinity; no censoring is written as null
        "tau": r.tau.is_finite().then_some(r.tau),
    });
    fs::write(a.out_dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    fs::write(
        a.out_dir.join("schema.json"),
        serde_json::to_string_pretty(r.train.specs())?,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs, mut opts: OptimizerOptions) -> Result<ExitCode> {
    if !(a.gamma > 0.0 && a.gamma.is_finite()) {
        bail!("--gamma must be positive, got {}", a.gamma);
    }
    if let Some(m) = a.max_newton {
        opts.max_newton = m;
    }
    opts.verbose |= a.verbose;
    let d = load_data(&a.data)?;
    let kernel = kernel_choice(&a.kernel, a.sigma)?;
    let mode: PairMode = a.pairs.parse()?;
    let m = model::fit(&d, &kernel, a.gamma, &opts, mode)?;
    model::save(&m, &a.out_model)?;
    if let Some(path) = &a.report {
        let mut w = output(Some(path))?;
        writeln!(w, "iteration,objective,grad_norm,cg_iterations,step")?;
        for r in &m.report.iterations {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iteration, r.objective, r.grad_norm, r.cg_iterations, r.step
            )?;
        }
        w.flush()?;
    }
    log::info!(
        "{} Newton iterations, objective {}, termination {:?}",
        m.report.newton_iterations(),
        m.report.final_objective(),
        m.report.termination
    );
    if m.report.termination.converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "warning: training stopped before convergence ({:?}); model written",
            m.report.termination
        );
        Ok(ExitCode::from(2))
    }
}

fn grid_search(a: GridArgs, opts: OptimizerOptions) -> Result<ExitCode> {
    let d = load_data(&a.data)?;
    let kernel = kernel_choice(&a.kernel, a.sigma)?;
    let gs = GridSearchOptions {
        grid: grid::parse_grid(&a.grid)?,
        n_splits: a.splits,
        train_frac: a.train_frac,
        seed: a.seed,
        pair_mode: a.pairs.parse()?,
        optimizer: opts,
    };
    let result = model::grid_search(&d, &kernel, &gs)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "gamma,mean_cindex,std_cindex,splits")?;
    for row in &result.table {
        writeln!(w, "{},{},{},{}", row.gamma, row.mean_cindex, row.std_cindex, row.splits)?;
    }
    w.flush()?;
    eprintln!("best_gamma={}", result.best_gamma);
    Ok(ExitCode::SUCCESS)
}

fn predict(a: PredictArgs) -> Result<ExitCode> {
    let m = model::load(&a.model)?;
    let x = load_features_csv(&a.data, &m.specs)?;
    let scores = model::predict(&m, x.view())?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "row,score")?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(w, "{i},{s}")?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let m = model::load(&a.model)?;
    let d = load_csv(&a.data, &m.specs, &a.time_col, &a.event_col)?;
    let scores = model::predict(&m, d.x())?;
    let c = harrell_c(d.time(), d.event(), &scores)?;
    println!("cindex,concordant,discordant,tied_score,comparable");
    println!(
        "{},{},{},{},{}",
        c.cindex, c.concordant, c.discordant, c.tied_score, c.comparable
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchmarkArgs) -> Result<ExitCode> {
    let rows = benchmark(&BenchmarkOptions {
        sizes: a.sizes,
        repeats: a.repeats,
        seed: a.seed,
        max_hessvec_n: a.max_hessvec_n,
        naive: !a.skip_naive,
    })?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "n,count_ms,naive_ms,hessvec_ms,kv_ms,kv_share")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n,
            r.count_ms,
            opt_cell(r.naive_ms),
            opt_cell(r.hessvec_ms),
            opt_cell(r.kv_ms),
            opt_cell(r.kv_share)
        )?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(a: ExperimentArgs, opts: OptimizerOptions) -> Result<ExitCode> {
    let kernels = a
        .kernels
        .iter()
        .map(|k| kernel_choice(k, None))
        .collect::<Result<Vec<_>>>()?;
    let pair_modes = a
        .pairs
        .iter()
        .map(|p| p.parse::<PairMode>())
        .collect::<kssvm::Result<Vec<_>>>()?;
    let result = run_experiment(&ExperimentOptions {
        replicates: a.replicates,
        n_train: a.n,
        n_test: a.n_test.unwrap_or(a.n),
        seed: a.seed,
        kernels,
        pair_modes,
        grid: grid::parse_grid(&a.grid)?,
        n_splits: a.splits,
        optimizer: opts,
    })?;
    if let Some(path) = &a.rows_out {
        let mut w = output(Some(path))?;
        writeln!(w, "replicate,kernel,pairs,gamma,cindex,converged")?;
        for r in &result.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.replicate,
                r.kernel,
                r.pair_mode.name(),
                r.gamma,
                r.cindex,
                r.converged
            )?;
        }
        w.flush()?;
    }
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "kernel,pairs,replicates,mean_cindex,std_cindex")?;
    for s in &result.summary {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.kernel,
            s.pair_mode.name(),
            s.replicates,
            s.mean_cindex,
            s.std_cindex
        )?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}
