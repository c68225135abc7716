//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input (arguments, parsing, invalid model),
//! 3 numerical failure, 1 anything else.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{run_preset, Experiment, ExperimentConfig, Preset, Scenario};
use crate::graph::{hub_dag, random_dag, WeightRule};
use crate::moments::{MomentCache, PopulationMoments};
use crate::order_search::{estimate_graph, EstimateConfig, Stat};
use crate::sem::{PopulationOracle, Sem, SemJson};

#[derive(Debug, Parser)]
#[command(name = "hdlingam", version, about = "Causal ordering and graph estimation for linear non-Gaussian SEMs")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HDLINGAM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate ordering and parent sets from a CSV data set.
    Discover(DiscoverArgs),
    /// Simulate data from a model file or a random graph generator.
    Simulate(SimulateArgs),
    /// Run a simulation study.
    Benchmark(BenchmarkArgs),
    /// Exact population statistics and faithfulness audits for a model file.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    /// CSV with a header row, one column per variable.
    #[arg(long)]
    pub input: PathBuf,
    /// Result JSON (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub max_in_degree: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(3..=6))]
    pub moment_order: u32,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Stat::Maxmin)]
    pub stat: Stat,
    /// Scale every column to unit variance after centering.
    #[arg(long)]
    pub standardize: bool,
    /// Fixed pruning cutoff instead of the rising rule.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorKind {
    Uniform,
    Gaussian,
    /// Gaussian moments with a perturbed top moment (population use only).
    Offset,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model JSON; when omitted a graph is drawn from `--scenario`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Data CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Model JSON for the ground truth (default: `<output>.sem.json`).
    #[arg(long)]
    pub graph_output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Scenario::Random)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub max_in_degree: usize,
    #[arg(long, default_value_t = 3)]
    pub n_hubs: usize,
    #[arg(long, value_enum, default_value_t = ErrorKind::Uniform)]
    pub errors: ErrorKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum, default_value_t = Experiment::LowDim)]
    pub experiment: Experiment,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the preset's replication count.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Override the preset's graph sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    /// Override the preset's statistics.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub stat: Option<Vec<Stat>>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Model JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Effect node `v` (1-based) for a statistic query.
    #[arg(long, requires = "u")]
    pub v: Option<usize>,
    /// Target node `u` (1-based).
    #[arg(long, requires = "v")]
    pub u: Option<usize>,
    /// Conditioning set (1-based, comma separated).
    #[arg(long, value_delimiter = ',')]
    pub cond: Vec<usize>,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(3..=6))]
    pub moment_order: u32,
    /// Audit parental faithfulness with conditioning sets up to this size.
    #[arg(long)]
    pub faithfulness: Option<usize>,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::Parse(_) | Error::Structure(_) | Error::Json(_) | Error::Io(_) => 2,
        Error::Numerical(_) => 3,
        Error::State(_) => 1,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::input("--threads must be at least 1"));
        }
        // a second initialization (e.g. in tests) keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Discover(a) => discover(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Oracle(a) => oracle(a),
    }
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

fn discover(a: DiscoverArgs) -> Result<()> {
    let data = Dataset::read_csv_path(&a.input).map_err(|e| match e {
        Error::Io(io) => Error::input(format!("cannot read {}: {io}", a.input.display())),
        other => other,
    })?;
    let data = if a.standardize { data.centered().standardized() } else { data };
    let cfg = EstimateConfig {
        max_in_degree: a.max_in_degree,
        moment_order: a.moment_order,
        alpha: a.alpha,
        stat: a.stat,
        fixed_cutoff: a.cutoff,
        ..EstimateConfig::default()
    };
    let est = estimate_graph(&data, &cfg)?;
    let mut value = serde_json::to_value(est.to_json())?;
    value["labels"] = json!(data.labels());
    write_json(a.output.as_deref(), &value)?;
    let final_g = est.diagnostics.g.last().copied().unwrap_or(cfg.g0);
    eprintln!(
        "p={} n={} steps={} edges={} final_g={:.6}",
        data.p(),
        data.n(),
        est.diagnostics.root_stats.len(),
        est.edges().len(),
        final_g
    );
    Ok(())
}

fn read_sem(path: &Path) -> Result<Sem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let j: SemJson = serde_json::from_str(&text)
        .map_err(|e| Error::input(format!("invalid model file {}: {e}", path.display())))?;
    Sem::from_json(&j)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let sem = match &a.input {
        Some(path) => read_sem(path)?,
        None => {
            let g = match a.scenario {
                Scenario::Random => random_dag(a.p, a.max_in_degree, WeightRule::RANDOM, a.seed)?,
                Scenario::Hub => hub_dag(a.p, a.n_hubs, a.seed)?,
            };
            let err_seed = crate::rng::derive_seed(a.seed, 1);
            match a.errors {
                ErrorKind::Uniform => Sem::with_uniform_errors(g, err_seed),
                ErrorKind::Gaussian => Sem::with_uniform_errors(g, err_seed).gaussianized(),
                ErrorKind::Offset => Sem::with_offset_errors(g, 4, err_seed),
            }
        }
    };
    if sem.all_gaussian_up_to(6) {
        eprintln!(
            "warning: every error law is Gaussian; the causal ordering is not identifiable from these data"
        );
    }
    let data = sem.simulate(a.n, crate::rng::derive_seed(a.seed, 2))?;
    data.write_csv(std::fs::File::create(&a.output)?)?;
    let graph_path = a.graph_output.clone().unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".sem.json");
        PathBuf::from(s)
    });
    write_json(Some(&graph_path), &serde_json::to_value(sem.to_json())?)?;
    eprintln!(
        "wrote {} ({} x {}) and {}",
        a.output.display(),
        data.n(),
        data.p(),
        graph_path.display()
    );
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::preset(a.experiment, a.preset, a.seed);
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(ps) = a.p {
        cfg.ps = ps;
    }
    if let Some(s) = a.stat {
        cfg.stats = s;
    }
    let res = run_preset(a.experiment, &cfg)?;
    let failures = res.records.iter().filter(|r| r.error.is_some()).count();
    for r in res.records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "replicate {} (p={}, n={}, {}) failed: {}",
            r.replicate,
            r.p,
            r.n,
            r.stat,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let (csv, js) = res.write_files(&a.output)?;
    for c in &res.summary {
        eprintln!(
            "p={} n={} stat={} median_tau={} failures={}{}",
            c.p,
            c.n,
            c.stat,
            c.median_tau.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into()),
            c.failures,
            c.mean_seconds.map(|s| format!(" mean_seconds={s:.4}")).unwrap_or_default()
        );
    }
    eprintln!("wrote {} and {}", csv.display(), js.display());
    if !res.records.is_empty() && failures == res.records.len() {
        return Err(Error::numerical("every replicate failed"));
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let sem = read_sem(&a.input)?;
    let p = sem.num_nodes();
    let oracle = PopulationOracle::new(sem)?;
    let mut report = json!({
        "p": p,
        "min_eigenvalue": oracle.min_eigenvalue(),
    });
    let to_idx = |x: usize| -> Result<usize> {
        if x == 0 || x > p {
            Err(Error::input(format!("node label {x} out of range 1..={p}")))
        } else {
            Ok(x - 1)
        }
    };
    if let (Some(v), Some(u)) = (a.v, a.u) {
        let v = to_idx(v)?;
        let u = to_idx(u)?;
        let mut cond = a.cond.iter().map(|&c| to_idx(c)).collect::<Result<Vec<_>>>()?;
        cond.sort_unstable();
        cond.dedup();
        let k = a.moment_order as usize;
        let tau = oracle.population_tau(v, u, &cond, k)?;
        let closed = oracle.population_tau_closed_form(v, u, &cond, k)?;
        let pm = PopulationMoments::new(oracle.clone());
        let plug_in = MomentCache::new(&pm, a.moment_order).tau_hat(v, u, &cond, a.moment_order)?;
        report["tau"] = json!({
            "v": v + 1,
            "u": u + 1,
            "cond": cond.iter().map(|c| c + 1).collect::<Vec<_>>(),
            "moment_order": k,
            "population": tau,
            "closed_form": closed,
            "plug_in": plug_in,
            "residual_total_effect": oracle.residual_total_effect(v, u, &cond)?,
        });
    }
    if let Some(j) = a.faithfulness {
        let rep = oracle.parental_faithfulness(j)?;
        report["faithfulness"] = json!({
            "max_size": j,
            "faithful": rep.is_faithful(),
            "violations": rep.violations.iter().map(|f| json!({
                "u": f.u + 1,
                "v": f.v + 1,
                "cond": f.cond.iter().map(|c| c + 1).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        });
    }
    write_json(a.output.as_deref(), &report)
}
