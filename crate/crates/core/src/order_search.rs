//! Iterative root selection with candidate-parent pruning under a rising
//! cutoff, followed by a final parent selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{t1_minmax, MaxMinState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Dag, Ordering};
use crate::moments::{MomentCache, MomentSource, SampleMoments};
use crate::subsets::up_to;

/// Which aggregate drives root selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    /// Min-max, recomputed every step.
    Minmax,
    /// Max-min, maintained incrementally.
    Maxmin,
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stat::Minmax => "minmax",
            Stat::Maxmin => "maxmin",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    /// In-degree bound `J`.
    pub max_in_degree: usize,
    /// Moment order `K`.
    pub moment_order: u32,
    /// Cutoff multiplier.
    pub alpha: f64,
    pub stat: Stat,
    /// Initial cutoff.
    pub g0: f64,
    /// Fixed cutoff used for every step instead of the rising rule.
    pub fixed_cutoff: Option<f64>,
    /// Memoize statistic values across steps.
    pub tau_memo: bool,
    /// Check every incremental max-min table against a fresh enumeration.
    pub audit_incremental: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            max_in_degree: 3,
            moment_order: 4,
            alpha: 0.8,
            stat: Stat::Maxmin,
            g0: 0.0,
            fixed_cutoff: None,
            tau_memo: false,
            audit_incremental: false,
        }
    }
}

impl EstimateConfig {
    pub fn new(max_in_degree: usize, stat: Stat) -> Self {
        EstimateConfig { max_in_degree, stat, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.moment_order <= 2 {
            return Err(Error::input(format!("moment order must exceed 2, got {}", self.moment_order)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::input(format!("alpha must be a finite nonnegative number, got {}", self.alpha)));
        }
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            return Err(Error::input(format!("initial cutoff must be finite and nonnegative, got {}", self.g0)));
        }
        if let Some(g) = self.fixed_cutoff {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::input(format!("fixed cutoff must be finite and nonnegative, got {g}")));
            }
        }
        Ok(())
    }
}

/// Per-step record of the search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Cutoff after each step.
    pub g: Vec<f64>,
    /// Statistic of the selected root at each step.
    pub root_stats: Vec<f64>,
    /// Nodes (1-based) whose surviving candidates exceeded the in-degree bound.
    pub capped: Vec<usize>,
    /// Incremental table updates checked against fresh enumeration.
    pub audited_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    pub ordering: Ordering,
    /// Parents of each node, sorted.
    pub parents: Vec<Vec<usize>>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimateJson {
    pub ordering: Vec<usize>,
    pub parents: BTreeMap<String, Vec<usize>>,
    pub diagnostics: Diagnostics,
}

impl GraphEstimate {
    pub fn num_nodes(&self) -> usize {
        self.parents.len()
    }

    /// Estimated edges `(u, v)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(v, ps)| ps.iter().map(move |&u| (u, v)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn to_dag(&self) -> Result<Dag> {
        Dag::new(self.num_nodes(), &self.edges())
    }

    /// 1-based labels throughout.
    pub fn to_json(&self) -> GraphEstimateJson {
        GraphEstimateJson {
            ordering: self.ordering.labels(),
            parents: self
                .parents
                .iter()
                .enumerate()
                .map(|(v, ps)| ((v + 1).to_string(), ps.iter().map(|p| p + 1).collect()))
                .collect(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// `max(g_prev, alpha * root_stat)`.
pub fn update_cutoff(g_prev: f64, alpha: f64, root_stat: f64) -> f64 {
    g_prev.max(alpha * root_stat)
}

/// Placed nodes `p` whose `min over C subset of Theta \ {p}, |C| <= J` of
/// `|tau_{v.C -> p}|` exceeds `g`, scanning every admissible subset.
pub fn prune_candidates<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    v: usize,
    theta: &[usize],
    j: usize,
    k: u32,
    g: f64,
) -> Result<Vec<usize>> {
    if theta.contains(&v) {
        return Err(Error::input(format!("node {} is already placed", v + 1)));
    }
    let mins = subset_minima(cache, v, theta, j, k, None)?;
    let mut kept: Vec<usize> = theta.iter().copied().filter(|p| mins[p] > g).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// For every `p` in `pool`: min of `|tau_{v.C -> p}|` over `C subset of pool \ {p}`
/// with `|C| <= J`, optionally restricted to subsets containing `must`.
fn subset_minima<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    v: usize,
    pool: &[usize],
    j: usize,
    k: u32,
    must: Option<usize>,
) -> Result<BTreeMap<usize, f64>> {
    let mut mins: BTreeMap<usize, f64> = pool.iter().map(|&p| (p, f64::INFINITY)).collect();
    for c in up_to(pool, j) {
        if let Some(m) = must {
            if !c.contains(&m) {
                continue;
            }
        }
        let targets: Vec<usize> = pool.iter().copied().filter(|p| !c.contains(p)).collect();
        if targets.is_empty() {
            continue;
        }
        let vals = cache.tau_hat_many(v, &c, &targets, k)?;
        for (p, t) in targets.iter().zip(vals) {
            let slot = mins.get_mut(p).expect("target drawn from pool");
            *slot = slot.min(t.abs());
        }
    }
    Ok(mins)
}

/// Candidate-parent bookkeeping for one unplaced node.
#[derive(Debug, Clone)]
struct NodeState {
    v: usize,
    /// Candidate parents with their running minimum statistic, sorted by node.
    cands: BTreeMap<usize, f64>,
    table: Option<MaxMinState>,
}

impl NodeState {
    fn cand_list(&self) -> Vec<usize> {
        self.cands.keys().copied().collect()
    }

    /// Admit or reject the newly placed `r` and re-screen the existing
    /// candidates with subsets that contain `r`.
    fn screen<S: MomentSource + ?Sized>(
        &mut self,
        cache: &MomentCache<S>,
        r: usize,
        j: usize,
        k: u32,
        g: f64,
    ) -> Result<()> {
        let old = self.cand_list();
        // admission: all subsets of the current candidates
        let mut admit = f64::INFINITY;
        for c in up_to(&old, j) {
            admit = admit.min(cache.tau_hat(self.v, r, &c, k)?.abs());
        }
        // existing candidates: new subsets are exactly those containing r
        let mut pool = old.clone();
        pool.push(r);
        pool.sort_unstable();
        let fresh = subset_minima(cache, self.v, &pool, j, k, Some(r))?;
        for (p, m) in self.cands.iter_mut() {
            *m = m.min(fresh[p]);
        }
        self.cands.insert(r, admit);
        self.cands.retain(|_, m| *m > g);
        Ok(())
    }
}

/// Run the search on a data set; columns are centered first.
pub fn estimate_graph(data: &Dataset, config: &EstimateConfig) -> Result<GraphEstimate> {
    if data.p() > 0 && data.n() < 2 {
        return Err(Error::input(format!("need at least 2 observations, got {}", data.n())));
    }
    let source = SampleMoments::new(data.clone());
    estimate_with_source(&source, config)
}

/// Run the search on any moment source.
pub fn estimate_with_source<S: MomentSource + ?Sized>(source: &S, config: &EstimateConfig) -> Result<GraphEstimate> {
    config.validate()?;
    let p = source.num_vars();
    let j = config.max_in_degree;
    let k = config.moment_order;
    let cache = MomentCache::new(source, k).with_tau_memo(config.tau_memo);
    let mut diag = Diagnostics::default();
    let mut g = config.fixed_cutoff.unwrap_or(config.g0);
    let mut theta: Vec<usize> = Vec::with_capacity(p);
    let mut active: Vec<NodeState> = (0..p)
        .map(|v| NodeState { v, cands: BTreeMap::new(), table: None })
        .collect();
    let mut placed: Vec<Option<NodeState>> = vec![None; p];
    let mut last: Option<usize> = None;

    for step in 1..=p {
        let remaining: Vec<usize> = active.iter().map(|s| s.v).collect();
        let stats: Vec<f64> = active
            .par_iter_mut()
            .map(|st| {
                let v = st.v;
                let ctx = |e: Error| with_context(e, step, v);
                if let Some(r) = last {
                    st.screen(&cache, r, j, k, g).map_err(ctx)?;
                }
                let cands = st.cand_list();
                let targets: Vec<usize> = remaining.iter().copied().filter(|&u| u != v).collect();
                match config.stat {
                    Stat::Minmax => {
                        if targets.is_empty() {
                            Ok(0.0)
                        } else {
                            t1_minmax(&cache, v, &cands, &targets, j, k).map_err(ctx)
                        }
                    }
                    Stat::Maxmin => {
                        match (&mut st.table, last) {
                            (Some(table), Some(r)) => {
                                table.retire(r).map_err(ctx)?;
                                table.advance(&cache, r, &cands).map_err(ctx)?;
                            }
                            _ => {
                                st.table =
                                    Some(MaxMinState::build(&cache, v, &cands, &targets, j, k).map_err(ctx)?);
                            }
                        }
                        let table = st.table.as_ref().expect("table present");
                        if config.audit_incremental && !targets.is_empty() {
                            audit(&cache, table, &cands, &targets, j, k).map_err(ctx)?;
                        }
                        Ok(table.value())
                    }
                }
            })
            .collect::<Result<_>>()?;
        if config.audit_incremental && config.stat == Stat::Maxmin {
            diag.audited_updates += stats.len();
        }
        // argmin, ties to the smallest node
        let (idx, &root_stat) = stats
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(active[a.0].v.cmp(&active[b.0].v)))
            .expect("nonempty remaining set");
        let st = active.remove(idx);
        let r = st.v;
        if config.fixed_cutoff.is_none() {
            g = update_cutoff(g, config.alpha, root_stat);
        }
        diag.g.push(g);
        diag.root_stats.push(root_stat);
        theta.push(r);
        placed[r] = Some(st);
        last = Some(r);
    }

    let mut parents = vec![Vec::new(); p];
    for (v, st) in placed.into_iter().enumerate() {
        let st = st.expect("every node placed");
        let (ps, capped) = final_parents_from(&st.cands, j, g);
        if capped {
            diag.capped.push(v + 1);
        }
        parents[v] = ps;
    }
    Ok(GraphEstimate { ordering: Ordering::new(theta)?, parents, diagnostics: diag })
}

fn with_context(e: Error, step: usize, v: usize) -> Error {
    let tag = format!("step {step}, node {}", v + 1);
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{tag}: {m}")),
        Error::State(m) => Error::State(format!("{tag}: {m}")),
        Error::Input(m) => Error::Input(format!("{tag}: {m}")),
        other => other,
    }
}

fn audit<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    table: &MaxMinState,
    cands: &[usize],
    targets: &[usize],
    j: usize,
    k: u32,
) -> Result<()> {
    let fresh = crate::aggregate::t2_minima(cache, table.node(), cands, targets, j, k)?;
    let inc = table.minima();
    let same = inc.len() == fresh.len()
        && inc
            .iter()
            .zip(&fresh)
            .all(|((_, m, c), (fm, fc))| m.to_bits() == fm.to_bits() && c == fc);
    if same {
        Ok(())
    } else {
        Err(Error::State(format!(
            "incremental max-min table of node {} differs from a fresh enumeration",
            table.node() + 1
        )))
    }
}

/// Keep candidates whose stored statistic exceeds `g`; if more than `J`
/// survive keep the `J` largest (ties to smaller labels). Returns the sorted
/// parents and whether the cap was applied.
fn final_parents_from(cands: &BTreeMap<usize, f64>, j: usize, g: f64) -> (Vec<usize>, bool) {
    let mut kept: Vec<(usize, f64)> = cands.iter().filter(|(_, &m)| m > g).map(|(&p, &m)| (p, m)).collect();
    let capped = kept.len() > j;
    if capped {
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(j);
    }
    let mut ps: Vec<usize> = kept.into_iter().map(|(p, _)| p).collect();
    ps.sort_unstable();
    (ps, capped)
}

/// Parent sets for a complete ordering: each node's predecessors are screened
/// with every subset of at most `J` other predecessors against cutoff `g`,
/// then capped at the `J` largest statistics.
pub fn final_parents<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    ordering: &Ordering,
    j: usize,
    k: u32,
    g: f64,
) -> Result<Vec<Vec<usize>>> {
    let order = ordering.as_slice();
    (0..order.len())
        .into_par_iter()
        .map(|i| {
            let v = order[i];
            let pred = &order[..i];
            let mins = subset_minima(cache, v, pred, j, k, None)?;
            Ok(final_parents_from(&mins, j, g).0)
        })
        .collect::<Result<Vec<_>>>()
        .map(|by_pos| {
            let mut out = vec![Vec::new(); order.len()];
            for (i, ps) in by_pos.into_iter().enumerate() {
                out[order[i]] = ps;
            }
            out
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedDag;
    use crate::moments::PopulationMoments;
    use crate::sem::{ErrorLaw, PopulationOracle, Sem};
    use nalgebra::DMatrix;

    #[test]
    fn cutoff_examples() {
        assert_eq!(update_cutoff(0.3, 0.0, 5.0), 0.3);
        assert!((update_cutoff(0.0, 0.8, 0.5) - 0.4).abs() < 1e-15);
        assert_eq!(update_cutoff(1.0, 0.5, 1.0), 1.0);
    }

    #[test]
    fn single_node() {
        let d = Dataset::from_matrix(DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0])).unwrap();
        let est = estimate_graph(&d, &EstimateConfig::default()).unwrap();
        assert_eq!(est.ordering.as_slice(), &[0]);
        assert!(est.parents[0].is_empty());
    }

    #[test]
    fn empty_input() {
        let d = Dataset::from_matrix(DMatrix::zeros(5, 0)).unwrap();
        let est = estimate_graph(&d, &EstimateConfig::default()).unwrap();
        assert!(est.ordering.is_empty());
    }

    #[test]
    fn population_single_edge() {
        let g = WeightedDag::new(2, &[(0, 1, 1.0)]).unwrap();
        let sem = Sem::new(g, vec![ErrorLaw::uniform(1.0), ErrorLaw::uniform(0.5)]).unwrap();
        let pm = PopulationMoments::new(PopulationOracle::new(sem).unwrap());
        for stat in [Stat::Minmax, Stat::Maxmin] {
            let cfg = EstimateConfig { fixed_cutoff: Some(0.15), ..EstimateConfig::new(1, stat) };
            let est = estimate_with_source(&pm, &cfg).unwrap();
            assert_eq!(est.ordering.as_slice(), &[0, 1]);
            assert_eq!(est.parents, vec![vec![], vec![0]]);
        }
    }

    #[test]
    fn prune_on_empty_theta() {
        let g = WeightedDag::new(2, &[(0, 1, 1.0)]).unwrap();
        let sem = Sem::with_uniform_errors(g, 1);
        let pm = PopulationMoments::new(PopulationOracle::new(sem).unwrap());
        let c = MomentCache::new(&pm, 4);
        assert!(prune_candidates(&c, 1, &[], 2, 4, 0.0).unwrap().is_empty());
        assert_eq!(prune_candidates(&c, 1, &[0], 2, 4, 0.0).unwrap(), vec![0]);
    }

    #[test]
    fn final_parents_cap_prefers_largest() {
        let cands: BTreeMap<usize, f64> = [(0, 0.5), (1, 0.9), (2, 0.7), (3, 0.05)].into_iter().collect();
        assert_eq!(final_parents_from(&cands, 2, 0.1), (vec![1, 2], true));
        assert_eq!(final_parents_from(&cands, 3, 0.1), (vec![0, 1, 2], false));
    }

    #[test]
    fn json_is_one_based() {
        let est = GraphEstimate {
            ordering: Ordering::new(vec![1, 0]).unwrap(),
            parents: vec![vec![1], vec![]],
            diagnostics: Diagnostics::default(),
        };
        let j = serde_json::to_value(est.to_json()).unwrap();
        assert_eq!(j["ordering"], serde_json::json!([2, 1]));
        assert_eq!(j["parents"]["1"], serde_json::json!([2]));
    }
}
