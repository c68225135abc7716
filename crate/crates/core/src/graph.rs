//! Directed acyclic graphs, weighted coefficient matrices, and the two random
//! graph generators used by the experiments.
//!
//! Nodes are dense indices `0..p` inside the library. Serialized forms (JSON,
//! CSV headers, printed orderings) use 1-based labels `1..=p`.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Directed acyclic graph over nodes `0..p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    p: usize,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Build a DAG from `(u, v)` pairs meaning `u -> v`.
    ///
    /// Rejects self-loops, duplicate edges, out-of-range nodes, and cycles.
    pub fn new(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); p];
        let mut children = vec![Vec::new(); p];
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            if u >= p || v >= p {
                return Err(Error::input(format!(
                    "edge ({}, {}) references a node outside 1..={p}",
                    u + 1,
                    v + 1
                )));
            }
            if u == v {
                return Err(Error::structure(format!("self-loop at node {}", u + 1)));
            }
            if !seen.insert((u, v)) {
                return Err(Error::structure(format!("duplicate edge ({}, {})", u + 1, v + 1)));
            }
            parents[v].push(u);
            children[u].push(v);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let dag = Dag { p, parents, children };
        dag.topological_sort()?;
        Ok(dag)
    }

    /// Graph on `p` nodes with no edges.
    pub fn empty(p: usize) -> Self {
        Dag {
            p,
            parents: vec![Vec::new(); p],
            children: vec![Vec::new(); p],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.p
    }

    /// Edges as `(u, v)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(u, ch)| ch.iter().map(move |&v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        v < self.p && self.parents[v].binary_search(&u).is_ok()
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.p {
            Err(Error::input(format!("unknown node label {} (graph has {} nodes)", v + 1, self.p)))
        } else {
            Ok(())
        }
    }

    /// Sorted parents of `v`.
    pub fn parents(&self, v: usize) -> Result<&[usize]> {
        self.check(v)?;
        Ok(&self.parents[v])
    }

    /// Sorted children of `v`.
    pub fn children(&self, v: usize) -> Result<&[usize]> {
        self.check(v)?;
        Ok(&self.children[v])
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.parents[v].len()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.children[v].len()
    }

    fn reach(&self, v: usize, adj: &[Vec<usize>]) -> BTreeSet<usize> {
        let mut seen = vec![false; self.p];
        let mut queue = VecDeque::from([v]);
        let mut out = BTreeSet::new();
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    out.insert(y);
                    queue.push_back(y);
                }
            }
        }
        out
    }

    /// Nodes with a directed path into `v`, excluding `v`.
    pub fn ancestors(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check(v)?;
        Ok(self.reach(v, &self.parents))
    }

    /// Nodes reachable from `v`, excluding `v`.
    pub fn descendants(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check(v)?;
        Ok(self.reach(v, &self.children))
    }

    /// Kahn's algorithm, always emitting the smallest available node first.
    pub fn topological_sort(&self) -> Result<Ordering> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut heap: BinaryHeap<Reverse<usize>> =
            (0..self.p).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(Reverse(u)) = heap.pop() {
            order.push(u);
            for &v in &self.children[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    heap.push(Reverse(v));
                }
            }
        }
        if order.len() != self.p {
            return Err(Error::structure("graph contains a directed cycle"));
        }
        Ok(Ordering(order))
    }

    /// True iff no edge `u -> v` has `v` placed before `u`.
    pub fn is_consistent_ordering(&self, ord: &Ordering) -> bool {
        if ord.len() != self.p {
            return false;
        }
        let pos = ord.positions();
        if pos.iter().any(|&x| x == usize::MAX) {
            return false;
        }
        self.edges().iter().all(|&(u, v)| pos[u] < pos[v])
    }
}

/// A permutation of `0..p`, listing nodes from first cause to last effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering(pub Vec<usize>);

impl Ordering {
    pub fn new(nodes: Vec<usize>) -> Result<Self> {
        let p = nodes.len();
        let mut seen = vec![false; p];
        for &v in &nodes {
            if v >= p || std::mem::replace(&mut seen[v], true) {
                return Err(Error::input("ordering is not a permutation of the node set"));
            }
        }
        Ok(Ordering(nodes))
    }

    pub fn identity(p: usize) -> Self {
        Ordering((0..p).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `positions()[v]` is the index of node `v`; `usize::MAX` marks absent nodes.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            if v < pos.len() {
                pos[v] = i;
            }
        }
        pos
    }

    /// 1-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }
}

/// A DAG together with its coefficient matrix `B`, where `B[(v, u)]` is the
/// direct effect of `u` on `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag {
    dag: Dag,
    weights: DMatrix<f64>,
}

impl WeightedDag {
    /// Build from `(u, v, weight)` triples. Every edge must carry a nonzero weight.
    pub fn new(p: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let pairs: Vec<_> = edges.iter().map(|&(u, v, _)| (u, v)).collect();
        let dag = Dag::new(p, &pairs)?;
        let mut weights = DMatrix::zeros(p, p);
        for &(u, v, w) in edges {
            if w == 0.0 || !w.is_finite() {
                return Err(Error::input(format!(
                    "edge ({}, {}) needs a finite nonzero weight, got {w}",
                    u + 1,
                    v + 1
                )));
            }
            weights[(v, u)] = w;
        }
        Ok(WeightedDag { dag, weights })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// Coefficient matrix `B`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn num_nodes(&self) -> usize {
        self.dag.p
    }

    /// Weight of `u -> v`, zero when absent.
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.weights[(v, u)]
    }

    /// `(u, v, weight)` triples sorted by `(u, v)`.
    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        self.dag
            .edges()
            .into_iter()
            .map(|(u, v)| (u, v, self.weights[(v, u)]))
            .collect()
    }

    /// Relabel nodes: node `v` becomes `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let edges: Vec<_> = self
            .weighted_edges()
            .into_iter()
            .map(|(u, v, w)| (perm[u], perm[v], w))
            .collect();
        WeightedDag::new(self.num_nodes(), &edges)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            p: self.num_nodes(),
            edges: self
                .weighted_edges()
                .into_iter()
                .map(|(u, v, w)| (u + 1, v + 1, w))
                .collect(),
        }
    }

    pub fn from_json(g: &GraphJson) -> Result<Self> {
        let mut edges = Vec::with_capacity(g.edges.len());
        for &(u, v, w) in &g.edges {
            if u == 0 || v == 0 {
                return Err(Error::input("graph JSON labels are 1-based"));
            }
            edges.push((u - 1, v - 1, w));
        }
        WeightedDag::new(g.p, &edges)
    }
}

/// Serialized graph: `{"p": int, "edges": [[u, v, weight], ...]}` with 1-based
/// labels, edges sorted by `(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub p: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

/// Coefficient ranges for the random generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRule {
    /// Magnitude range of the backbone edge `v-1 -> v`; the sign is uniform.
    pub backbone: (f64, f64),
    /// Magnitude of every additional edge; the sign is uniform.
    pub extra: f64,
}

impl WeightRule {
    /// Backbone magnitudes on (.5, 1), extra edges at 1/5.
    pub const RANDOM: WeightRule = WeightRule { backbone: (0.5, 1.0), extra: 0.2 };
    /// Backbone magnitudes on (.65, 1), hub edges at 1/5.
    pub const HUB: WeightRule = WeightRule { backbone: (0.65, 1.0), extra: 0.2 };

    fn backbone_weight<R: Rng>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.backbone;
        // open interval on both ends
        let mag = loop {
            let x = rng.gen_range(lo..hi);
            if x > lo {
                break x;
            }
        };
        random_sign(rng) * mag
    }

    fn extra_weight<R: Rng>(&self, rng: &mut R) -> f64 {
        random_sign(rng) * self.extra
    }
}

fn random_sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Random DAG with a forced backbone chain.
///
/// Node `v` (1-based label `v >= 2`) draws its number of parents uniformly from
/// `1..=min(v-1, max_in_degree)`. The edge `v-1 -> v` is always present; the
/// remaining parents are drawn without replacement from labels `1..=v-2`.
pub fn random_dag(p: usize, max_in_degree: usize, rule: WeightRule, seed: u64) -> Result<WeightedDag> {
    if p < 2 {
        return Err(Error::input(format!("random_dag needs p >= 2, got {p}")));
    }
    if max_in_degree < 1 {
        return Err(Error::input("random_dag needs a max in-degree of at least 1"));
    }
    let mut rng = rng::seeded(seed);
    let mut edges = Vec::new();
    // `v` is the 0-based index; its label is v + 1 and it has v earlier nodes.
    for v in 1..p {
        let d = rng.gen_range(1..=v.min(max_in_degree));
        edges.push((v - 1, v, rule.backbone_weight(&mut rng)));
        if d > 1 {
            let mut extra: Vec<usize> = sample(&mut rng, v - 1, d - 1).into_vec();
            extra.sort_unstable();
            for u in extra {
                edges.push((u, v, rule.extra_weight(&mut rng)));
            }
        }
    }
    WeightedDag::new(p, &edges)
}

/// Hub graph: backbone chain plus one edge from a uniformly chosen hub
/// (labels `1..=n_hubs`) into every non-hub node.
///
/// When the drawn hub is already the backbone parent of the node, no second
/// edge is added, so in-degree never exceeds 2.
pub fn hub_dag(p: usize, n_hubs: usize, seed: u64) -> Result<WeightedDag> {
    if n_hubs == 0 || n_hubs >= p {
        return Err(Error::input(format!(
            "hub_dag needs 1 <= n_hubs < p, got n_hubs={n_hubs}, p={p}"
        )));
    }
    let rule = WeightRule::HUB;
    let mut rng = rng::seeded(seed);
    let mut edges = Vec::new();
    for v in 1..p {
        edges.push((v - 1, v, rule.backbone_weight(&mut rng)));
    }
    for v in n_hubs..p {
        let hub = rng.gen_range(0..n_hubs);
        let w = rule.extra_weight(&mut rng);
        if hub != v - 1 {
            edges.push((hub, v, w));
        }
    }
    WeightedDag::new(p, &edges)
}
