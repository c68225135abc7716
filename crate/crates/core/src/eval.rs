//! Simulation experiments: ordering accuracy, edge recovery and timing over
//! grids of graph sizes and sample sizes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{hub_dag, random_dag, Dag, Ordering, WeightRule, WeightedDag};
use crate::order_search::{estimate_graph, EstimateConfig, GraphEstimate, Stat};
use crate::rng::derive_seed;
use crate::sem::Sem;

/// Kendall rank correlation between `estimated` and the unique topological
/// ordering of `truth`.
pub fn kendall_tau(estimated: &Ordering, truth: &Dag) -> Result<f64> {
    let p = truth.num_nodes();
    if estimated.len() != p {
        return Err(Error::input(format!(
            "ordering has {} nodes, graph has {p}",
            estimated.len()
        )));
    }
    let topo = truth.topological_sort()?;
    let t = topo.as_slice();
    if t.windows(2).any(|w| !truth.has_edge(w[0], w[1])) {
        return Err(Error::input("the true ordering is not unique; Kendall's tau is undefined"));
    }
    Ok(kendall_between(estimated, &topo))
}

/// Kendall rank correlation between two orderings of the same nodes.
pub fn kendall_between(a: &Ordering, b: &Ordering) -> f64 {
    let p = a.len();
    if p < 2 {
        return 1.0;
    }
    let pa = a.positions();
    let pb = b.positions();
    let mut s = 0i64;
    for i in 0..p {
        for j in i + 1..p {
            let x = (pa[i] as i64 - pa[j] as i64).signum();
            let y = (pb[i] as i64 - pb[j] as i64).signum();
            s += x * y;
        }
    }
    s as f64 / (p * (p - 1) / 2) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralMetrics {
    pub precision: f64,
    pub recall: f64,
    pub exact: bool,
}

pub fn structural_metrics(estimate: &GraphEstimate, truth: &WeightedDag) -> StructuralMetrics {
    let est: BTreeSet<(usize, usize)> = estimate.edges().into_iter().collect();
    let tru: BTreeSet<(usize, usize)> = truth.dag().edges().into_iter().collect();
    let hit = est.intersection(&tru).count() as f64;
    let precision = if est.is_empty() { 1.0 } else { hit / est.len() as f64 };
    let recall = if tru.is_empty() { 1.0 } else { hit / tru.len() as f64 };
    let exact = est == tru && truth.dag().is_consistent_ordering(&estimate.ordering);
    StructuralMetrics { precision, recall, exact }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Random,
    Hub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LowDim,
    Timing,
    HighDimRandom,
    HighDimHub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    pub ps: Vec<usize>,
    /// Sample size is `ceil(multiplier * p)` for each multiplier.
    pub n_multipliers: Vec<f64>,
    pub max_in_degree: usize,
    pub moment_order: u32,
    pub alpha: f64,
    pub stats: Vec<Stat>,
    pub replications: usize,
    pub seed: u64,
    /// Hub count for the hub scenario.
    pub n_hubs: usize,
    /// Record wall-clock times; replicates then run one at a time on a single worker.
    pub timed: bool,
}

impl ExperimentConfig {
    pub fn preset(experiment: Experiment, preset: Preset, seed: u64) -> Self {
        let paper = preset == Preset::Paper;
        let base = ExperimentConfig {
            name: String::new(),
            scenario: Scenario::Random,
            ps: vec![],
            n_multipliers: vec![],
            max_in_degree: 3,
            moment_order: 4,
            alpha: 0.8,
            stats: vec![Stat::Minmax, Stat::Maxmin],
            replications: if paper { 500 } else { 100 },
            seed,
            n_hubs: 3,
            timed: false,
        };
        match experiment {
            Experiment::LowDim => ExperimentConfig {
                name: "low-dim".into(),
                ps: if paper { vec![5, 10, 15, 20] } else { vec![5, 10] },
                n_multipliers: vec![50.0, 10.0],
                ..base
            },
            Experiment::Timing => ExperimentConfig {
                name: "timing".into(),
                ps: if paper { vec![5, 10, 15, 20, 40, 80] } else { vec![5, 10, 20, 40] },
                n_multipliers: vec![50.0],
                replications: if paper { 500 } else { 10 },
                timed: true,
                ..base
            },
            Experiment::HighDimRandom | Experiment::HighDimHub => ExperimentConfig {
                name: if experiment == Experiment::HighDimHub { "high-dim-hub" } else { "high-dim-random" }.into(),
                scenario: if experiment == Experiment::HighDimHub { Scenario::Hub } else { Scenario::Random },
                ps: if paper { vec![100, 200, 500, 1000, 1500] } else { vec![100, 200] },
                n_multipliers: vec![0.75],
                max_in_degree: 2,
                stats: vec![Stat::Maxmin],
                replications: 20,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::input("replication count must be at least 1"));
        }
        if self.ps.is_empty() || self.ps.iter().any(|&p| p < 2) {
            return Err(Error::input("every graph size must be at least 2"));
        }
        if self.n_multipliers.is_empty() || self.n_multipliers.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::input("sample-size multipliers must be positive"));
        }
        if self.stats.is_empty() {
            return Err(Error::input("at least one statistic is required"));
        }
        if self.scenario == Scenario::Hub && self.ps.iter().any(|&p| p <= self.n_hubs) {
            return Err(Error::input("hub scenario needs p larger than the hub count"));
        }
        self.estimate_config(Stat::Maxmin).validate()
    }

    fn estimate_config(&self, stat: Stat) -> EstimateConfig {
        EstimateConfig {
            max_in_degree: self.max_in_degree,
            moment_order: self.moment_order,
            alpha: self.alpha,
            stat,
            ..EstimateConfig::default()
        }
    }

    /// First 12 hex digits of the SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// `<name>_<hash>_seed<seed>`.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_seed{}", self.name, self.hash(), self.seed)
    }
}

/// One estimator run on one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub p: usize,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub stat: Stat,
    pub kendall_tau: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub exact: Option<bool>,
    pub max_in_degree: Option<usize>,
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub p: usize,
    pub n: usize,
    pub stat: Stat,
    pub replicates: usize,
    pub failures: usize,
    pub median_tau: Option<f64>,
    pub q25_tau: Option<f64>,
    pub q75_tau: Option<f64>,
    pub exact_rate: Option<f64>,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub summary: Vec<SummaryCell>,
}

fn sample_size(mult: f64, p: usize) -> usize {
    ((mult * p as f64) - 1e-9).ceil().max(2.0) as usize
}

struct Task {
    p: usize,
    n: usize,
    replicate: usize,
    seed: u64,
}

fn tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    for &p in &cfg.ps {
        for &m in &cfg.n_multipliers {
            for replicate in 0..cfg.replications {
                // the graph and errors depend on (p, replicate) only, so cells
                // that differ in n share their models
                let seed = derive_seed(derive_seed(cfg.seed, p as u64), replicate as u64);
                out.push(Task { p, n: sample_size(m, p), replicate, seed });
            }
        }
    }
    out
}

fn run_task(cfg: &ExperimentConfig, t: &Task) -> Vec<Record> {
    let blank = |stat| Record {
        p: t.p,
        n: t.n,
        replicate: t.replicate,
        seed: t.seed,
        stat,
        kendall_tau: None,
        precision: None,
        recall: None,
        exact: None,
        max_in_degree: None,
        seconds: None,
        error: None,
    };
    let setup = || -> Result<(WeightedDag, crate::data::Dataset)> {
        let g = match cfg.scenario {
            Scenario::Random => random_dag(t.p, cfg.max_in_degree, WeightRule::RANDOM, derive_seed(t.seed, 0))?,
            Scenario::Hub => hub_dag(t.p, cfg.n_hubs, derive_seed(t.seed, 0))?,
        };
        let sem = Sem::with_uniform_errors(g.clone(), derive_seed(t.seed, 1));
        let data = sem.simulate(t.n, derive_seed(t.seed, 2))?;
        Ok((g, data))
    };
    let (g, data) = match setup() {
        Ok(x) => x,
        Err(e) => {
            return cfg
                .stats
                .iter()
                .map(|&s| Record { error: Some(e.to_string()), ..blank(s) })
                .collect()
        }
    };
    cfg.stats
        .iter()
        .map(|&stat| {
            let est_cfg = cfg.estimate_config(stat);
            let start = Instant::now();
            let res = estimate_graph(&data, &est_cfg);
            let secs = start.elapsed().as_secs_f64();
            let mut rec = blank(stat);
            if cfg.timed {
                rec.seconds = Some(secs);
            }
            match res.and_then(|est| Ok((kendall_tau(&est.ordering, g.dag())?, est))) {
                Ok((tau, est)) => {
                    let m = structural_metrics(&est, &g);
                    rec.kendall_tau = Some(tau);
                    rec.precision = Some(m.precision);
                    rec.recall = Some(m.recall);
                    rec.exact = Some(m.exact);
                    rec.max_in_degree = est.parents.iter().map(Vec::len).max();
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Run every cell of the grid. Results are a pure function of the config
/// apart from the optional wall-clock column.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let tasks = tasks(cfg);
    let records: Vec<Record> = if cfg.timed {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::input(format!("thread pool: {e}")))?;
        pool.install(|| tasks.iter().flat_map(|t| run_task(cfg, t)).collect())
    } else {
        tasks.par_iter().flat_map_iter(|t| run_task(cfg, t)).collect()
    };
    let summary = summarize(cfg, &records);
    Ok(ExperimentResult { config: cfg.clone(), records, summary })
}

/// Random-graph grid comparing both statistics.
pub fn run_low_dim(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.scenario != Scenario::Random {
        return Err(Error::input("the low-dimensional grid uses random graphs"));
    }
    run_experiment(cfg)
}

/// Wall-clock comparison of the two statistics on shared data sets.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if !(cfg.stats.contains(&Stat::Minmax) && cfg.stats.contains(&Stat::Maxmin)) {
        return Err(Error::input("the timing study needs both statistics"));
    }
    let cfg = ExperimentConfig { timed: true, ..cfg.clone() };
    run_experiment(&cfg)
}

/// Sparse high-dimensional grid (`n` below `p`).
pub fn run_high_dim(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment(cfg)
}

pub fn run_preset(experiment: Experiment, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match experiment {
        Experiment::LowDim => run_low_dim(cfg),
        Experiment::Timing => run_timing(cfg),
        Experiment::HighDimRandom | Experiment::HighDimHub => run_high_dim(cfg),
    }
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn summarize(cfg: &ExperimentConfig, records: &[Record]) -> Vec<SummaryCell> {
    let mut cells = Vec::new();
    for &p in &cfg.ps {
        for &m in &cfg.n_multipliers {
            let n = sample_size(m, p);
            for &stat in &cfg.stats {
                let rs: Vec<&Record> = records.iter().filter(|r| r.p == p && r.n == n && r.stat == stat).collect();
                let mut taus: Vec<f64> = rs.iter().filter_map(|r| r.kendall_tau).collect();
                taus.sort_by(f64::total_cmp);
                let ok = taus.len();
                let exact = rs.iter().filter(|r| r.exact == Some(true)).count();
                let secs: Vec<f64> = rs.iter().filter_map(|r| r.seconds).collect();
                cells.push(SummaryCell {
                    p,
                    n,
                    stat,
                    replicates: rs.len(),
                    failures: rs.len() - ok,
                    median_tau: quantile(&taus, 0.5),
                    q25_tau: quantile(&taus, 0.25),
                    q75_tau: quantile(&taus, 0.75),
                    exact_rate: (ok > 0).then(|| exact as f64 / ok as f64),
                    mean_seconds: (!secs.is_empty()).then(|| secs.iter().sum::<f64>() / secs.len() as f64),
                });
            }
        }
    }
    cells
}

impl ExperimentResult {
    pub fn cell(&self, p: usize, n: usize, stat: Stat) -> Option<&SummaryCell> {
        self.summary.iter().find(|c| c.p == p && c.n == n && c.stat == stat)
    }

    /// One line per record. The `seconds` column appears only for timed runs.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::input(format!("csv output: {e}"));
        let mut header = vec![
            "p", "n", "replicate", "seed", "stat", "kendall_tau", "precision", "recall", "exact", "max_in_degree",
        ];
        if self.config.timed {
            header.push("seconds");
        }
        header.push("error");
        out.write_record(&header).map_err(csv_err)?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![
                r.p.to_string(),
                r.n.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.stat.to_string(),
                opt(r.kendall_tau),
                opt(r.precision),
                opt(r.recall),
                r.exact.map(|b| b.to_string()).unwrap_or_default(),
                r.max_in_degree.map(|d| d.to_string()).unwrap_or_default(),
            ];
            if self.config.timed {
                row.push(opt(r.seconds));
            }
            row.push(r.error.clone().unwrap_or_default());
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Config plus summary table.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "config_hash": self.config.hash(),
            "summary": self.summary,
        })
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`; returns both paths.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = self.config.file_stem();
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        let mut f = std::fs::File::create(&json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.summary_json())?;
        writeln!(f)?;
        Ok((csv_path, json_path))
    }
}
