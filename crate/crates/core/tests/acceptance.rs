//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so the
//! timing comparison is not disturbed by concurrent work.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hdlingam::eval::{
    kendall_between, run_high_dim, run_low_dim, run_timing, Experiment, ExperimentConfig, Preset, SummaryCell,
};
use hdlingam::graph::{random_dag, WeightRule, WeightedDag};
use hdlingam::order_search::estimate_with_source;
use hdlingam::{Dataset, ErrorLaw, EstimateConfig, MomentCache, Ordering, PopulationMoments, PopulationOracle, SampleMoments, Sem, Stat};
use rand::Rng;

use common::{all_configurations, gamma, offset_sem, zero_configurations};

const SEED: u64 = 2024;
const TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// The 50 models shared by criteria 1 to 3: p in 2..=6, J in 1..=3.
fn suite_models() -> Vec<(Sem, usize)> {
    let mut rng = hdlingam::rng::seeded(SEED);
    (0..50)
        .map(|i| {
            let p = rng.gen_range(2..=6);
            let j = rng.gen_range(1..=3);
            (offset_sem(p, j, 4, hdlingam::rng::derive_seed(SEED, i)), j)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (sem, _) in suite_models() {
        let o = PopulationOracle::new(sem).unwrap();
        for (v, u, c) in zero_configurations(&o) {
            worst = worst.max(o.population_tau(v, u, &c, 4).unwrap().abs());
            checked += 1;
        }
    }
    ok(worst < TOL && checked > 0, format!("{checked} configurations, max |tau| = {worst:.3e}"))
}

fn criterion_2() -> Outcome {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (sem, _) in suite_models() {
        let o = PopulationOracle::new(sem.gaussianized()).unwrap();
        for (v, u, c) in all_configurations(o.num_nodes()) {
            if o.no_confounding_aggregates(v, u, &c, 4).unwrap().is_some() {
                worst = worst.max(o.population_tau(v, u, &c, 4).unwrap().abs());
                checked += 1;
            }
        }
    }
    ok(worst < TOL && checked > 0, format!("{checked} confounding-free configurations, max |tau| = {worst:.3e}"))
}

fn criterion_3() -> Outcome {
    let (mut closed_n, mut plug_n) = (0usize, 0usize);
    let (mut closed_err, mut plug_err) = (0.0f64, 0.0f64);
    for (sem, _) in suite_models() {
        let o = PopulationOracle::new(sem).unwrap();
        let pm = PopulationMoments::new(o.clone());
        let cache = MomentCache::new(&pm, 4);
        for (v, u, c) in all_configurations(o.num_nodes()) {
            let exact = o.population_tau(v, u, &c, 4).unwrap();
            if let Some(cf) = o.population_tau_closed_form(v, u, &c, 4).unwrap() {
                closed_err = closed_err.max((cf - exact).abs());
                closed_n += 1;
            }
            let plug = cache.tau_hat(v, u, &c, 4).unwrap();
            plug_err = plug_err.max((plug - exact).abs());
            plug_n += 1;
        }
    }
    ok(
        closed_err < TOL && plug_err < TOL && closed_n > 0,
        format!(
            "closed form: {closed_n} configs, max diff {closed_err:.3e}; plug-in: {plug_n} configs, max diff {plug_err:.3e}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = hdlingam::rng::seeded(SEED ^ 4);
    let (mut accepted, mut skipped, mut recovered) = (0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    let mut draw = 0u64;
    while accepted < 100 {
        draw += 1;
        let p = rng.gen_range(3..=8);
        let j = rng.gen_range(1..=3);
        let sem = offset_sem(p, j, 4, hdlingam::rng::derive_seed(SEED ^ 4, draw));
        let o = PopulationOracle::new(sem.clone()).unwrap();
        if !o.is_parentally_faithful(j).unwrap() {
            skipped += 1;
            continue;
        }
        let g = gamma(&o, j, 4);
        if !(g > 1e-6) {
            skipped += 1;
            continue;
        }
        accepted += 1;
        let pm = PopulationMoments::new(o);
        let mut all_ok = true;
        for stat in [Stat::Minmax, Stat::Maxmin] {
            // an edgeless graph has gamma = infinity; any small positive cutoff applies
            let cutoff = if g.is_finite() { g / 2.0 } else { 5e-7 };
            let cfg = EstimateConfig { fixed_cutoff: Some(cutoff), tau_memo: true, ..EstimateConfig::new(j, stat) };
            let dag = sem.wdag().dag();
            match estimate_with_source(&pm, &cfg) {
                Ok(est) if dag.is_consistent_ordering(&est.ordering) && est.edges() == dag.edges() => {}
                _ => all_ok = false,
            }
        }
        if all_ok {
            recovered += 1;
        } else {
            failures.push(draw);
        }
    }
    ok(
        recovered == accepted,
        format!("{recovered}/{accepted} models recovered exactly under both statistics ({skipped} draws skipped as unfaithful or gamma <= 1e-6); failing draws {failures:?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut audited = 0usize;
    let mut errors = Vec::new();
    for (i, alpha) in [0.0, 0.8].into_iter().enumerate() {
        for r in 0..20u64 {
            let seed = hdlingam::rng::derive_seed(SEED ^ 5, r + 100 * i as u64);
            let g = random_dag(8, 3, WeightRule::RANDOM, seed).unwrap();
            let data = Sem::with_uniform_errors(g, seed ^ 1).simulate(400, seed ^ 2).unwrap();
            let cfg = EstimateConfig { alpha, audit_incremental: true, ..EstimateConfig::new(3, Stat::Maxmin) };
            match hdlingam::estimate_graph(&data, &cfg) {
                Ok(est) => audited += est.diagnostics.audited_updates,
                Err(e) => errors.push(e.to_string()),
            }
        }
    }
    ok(
        errors.is_empty() && audited > 0,
        format!("40 runs (20 at alpha=0, 20 at alpha=0.8), {audited} incremental tables matched fresh enumeration bit for bit; errors: {errors:?}"),
    )
}

fn median_at(cells: &[SummaryCell], n: usize, stat: Stat) -> f64 {
    cells
        .iter()
        .find(|c| c.n == n && c.stat == stat)
        .and_then(|c| c.median_tau)
        .unwrap_or(f64::NAN)
}

fn criterion_6() -> Outcome {
    let cfg = ExperimentConfig {
        ps: vec![10],
        n_multipliers: vec![50.0, 10.0],
        replications: 100,
        ..ExperimentConfig::preset(Experiment::LowDim, Preset::Desk, SEED)
    };
    let res = run_low_dim(&cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for stat in [Stat::Minmax, Stat::Maxmin] {
        let hi = median_at(&res.summary, 500, stat);
        let lo = median_at(&res.summary, 100, stat);
        pass &= hi >= lo && hi >= 0.9;
        parts.push(format!("{stat}: median tau n=500 {hi:.4}, n=100 {lo:.4}"));
    }
    ok(pass, format!("{} (requires n=500 >= n=100 and n=500 >= 0.9)", parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let cfg = ExperimentConfig {
        ps: vec![100],
        n_multipliers: vec![0.75, 1.5],
        replications: 20,
        ..ExperimentConfig::preset(Experiment::HighDimHub, Preset::Desk, SEED)
    };
    let a = run_high_dim(&cfg).unwrap();
    let b = run_high_dim(&cfg).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    let deterministic = x == y;
    let complete = a.records.len() == 40 && a.records.iter().all(|r| r.error.is_none() && r.kendall_tau.is_some());
    let bounded = a.records.iter().all(|r| r.max_in_degree.is_some_and(|d| d <= 2));
    let m75 = median_at(&a.summary, 75, Stat::Maxmin);
    let m150 = median_at(&a.summary, 150, Stat::Maxmin);
    let taus: Vec<String> = a
        .records
        .iter()
        .filter(|r| r.n == 75)
        .map(|r| format!("{:.3}", r.kendall_tau.unwrap_or(f64::NAN)))
        .collect();
    ok(
        deterministic && complete && bounded && m150 >= m75,
        format!(
            "complete={complete} deterministic={deterministic} in-degree<=2={bounded}; median tau n=75 {m75:.4}, n=150 {m150:.4}; per-replicate tau at n=75 [{}]",
            taus.join(", ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = ExperimentConfig {
        ps: vec![40],
        n_multipliers: vec![50.0],
        replications: 10,
        ..ExperimentConfig::preset(Experiment::Timing, Preset::Desk, SEED)
    };
    let res = run_timing(&cfg).unwrap();
    let mean = |s| res.cell(40, 2000, s).and_then(|c| c.mean_seconds).unwrap_or(f64::NAN);
    let (t1, t2) = (mean(Stat::Minmax), mean(Stat::Maxmin));
    ok(t2 < t1, format!("mean wall-clock minmax {t1:.3}s, maxmin {t2:.3}s"))
}

fn criterion_9() -> Outcome {
    let g = WeightedDag::new(2, &[(0, 1, 1.0)]).unwrap();
    let sem = Sem::new(g, vec![ErrorLaw::uniform(1.0), ErrorLaw::uniform(0.5)]).unwrap();
    let o = PopulationOracle::new(sem.clone()).unwrap();
    let exact = o.population_tau(1, 0, &[], 4).unwrap();
    let closed = o.population_tau_closed_form(1, 0, &[], 4).unwrap().unwrap_or(f64::NAN);
    let n = 1_000_000;
    let data = sem.simulate(n, SEED).unwrap();
    let full = MomentCache::new(&SampleMoments::new(data.clone()), 4).tau_hat(1, 0, &[], 4).unwrap();
    // standard error from 100 batch estimates
    let batches = 100;
    let size = n / batches;
    let est: Vec<f64> = (0..batches)
        .map(|b| {
            let rows: Vec<usize> = (b * size..(b + 1) * size).collect();
            let m = nalgebra::DMatrix::from_fn(size, 2, |i, j| data.values()[(rows[i], j)]);
            let d = Dataset::from_matrix(m).unwrap();
            MomentCache::new(&SampleMoments::new(d), 4).tau_hat(1, 0, &[], 4).unwrap()
        })
        .collect();
    let mean = est.iter().sum::<f64>() / batches as f64;
    let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    let z = (full + 0.3) / se;
    ok(
        (exact + 0.3).abs() < TOL && (closed + 0.3).abs() < TOL && z.abs() <= 3.0,
        format!("oracle {exact:.12}, closed form {closed:.12}; estimate {full:.5} with standard error {se:.5} (z = {z:.2})"),
    )
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hdlingam")).args(args).output().expect("run binary");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .filter(|(name, _)| name.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let (code, err) = run_cli(&[
            "benchmark", "--experiment", "low-dim", "--preset", "desk", "--replications", "5", "--p", "5,8",
            "--seed", "7", "--output", d.to_str().unwrap(),
        ]);
        if code != 0 {
            return ok(false, format!("benchmark exited {code}: {err}"));
        }
    }
    let (a, b) = (read_dir_sorted(&dirs[0]), read_dir_sorted(&dirs[1]));
    let identical = !a.is_empty() && a == b;

    // permutation check on a simulated data set
    let g = random_dag(6, 2, WeightRule::RANDOM, 99).unwrap();
    let data = Sem::with_uniform_errors(g, 98).simulate(3000, 97).unwrap();
    let perm = [3usize, 0, 5, 1, 4, 2];
    let permuted = data.select_columns(&perm).unwrap();
    let (fa, fb) = (tmp.path().join("x.csv"), tmp.path().join("y.csv"));
    data.write_csv(std::fs::File::create(&fa).unwrap()).unwrap();
    permuted.write_csv(std::fs::File::create(&fb).unwrap()).unwrap();
    let (oa, ob) = (tmp.path().join("x.json"), tmp.path().join("y.json"));
    for (i, o) in [(&fa, &oa), (&fb, &ob)] {
        let (code, err) = run_cli(&["discover", "--input", i.to_str().unwrap(), "--output", o.to_str().unwrap()]);
        if code != 0 {
            return ok(false, format!("discover exited {code}: {err}"));
        }
    }
    let load = |p: &Path| -> serde_json::Value { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
    let (ja, jb) = (load(&oa), load(&ob));
    let labels = |j: &serde_json::Value| -> Vec<usize> {
        j["ordering"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize - 1).collect()
    };
    // column j of the permuted file is column perm[j] of the original
    let mapped: Vec<usize> = labels(&jb).into_iter().map(|j| perm[j]).collect();
    let same_order = mapped == labels(&ja);
    let mut same_parents = true;
    for (j, &orig) in perm.iter().enumerate() {
        let mut pb: Vec<usize> = jb["parents"][(j + 1).to_string()]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| perm[x.as_u64().unwrap() as usize - 1])
            .collect();
        pb.sort_unstable();
        let pa: Vec<usize> = ja["parents"][(orig + 1).to_string()]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap() as usize - 1)
            .collect();
        same_parents &= pa == pb;
    }
    let agreement = kendall_between(&Ordering::new(mapped).unwrap(), &Ordering::new(labels(&ja)).unwrap());
    ok(
        identical && same_order && same_parents,
        format!(
            "benchmark CSVs byte-identical={identical} ({} files); permuted discover: ordering matches={same_order}, parents match={same_parents} (kendall {agreement:.3})",
            a.len()
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 10] = [
        ("zero statistic when C covers the parents", criterion_1, Duration::from_secs(60)),
        ("Gaussian null on confounding-free configurations", criterion_2, Duration::from_secs(60)),
        ("oracle, closed form and plug-in agree", criterion_3, Duration::from_secs(120)),
        ("exact recovery at population moments", criterion_4, Duration::from_secs(300)),
        ("incremental max-min equals fresh enumeration", criterion_5, Duration::from_secs(60)),
        ("sample-level accuracy, p=10", criterion_6, Duration::from_secs(600)),
        ("hub graphs, p=100", criterion_7, Duration::from_secs(1200)),
        ("max-min faster than min-max, p=40", criterion_8, Duration::from_secs(900)),
        ("Monte-Carlo check of tau = -0.3", criterion_9, Duration::from_secs(60)),
        ("determinism and column permutation", criterion_10, Duration::from_secs(600)),
    ];
    let mut failed = Vec::new();
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= *budget;
        let pass = out.pass && in_time;
        println!(
            "{} criterion {:>2} ({name}): {} [{:.1}s of {}s budget]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
