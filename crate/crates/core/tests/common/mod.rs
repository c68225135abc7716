#![allow(dead_code)]

use std::collections::BTreeSet;

use hdlingam::graph::WeightedDag;
use hdlingam::rng::seeded;
use hdlingam::subsets::up_to;
use hdlingam::{PopulationOracle, Sem};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random DAG on `p` nodes in a shuffled order; each node takes up to `j`
/// parents with weights of magnitude in (0.5, 1) and random sign.
pub fn generic_dag(p: usize, j: usize, seed: u64) -> WeightedDag {
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 1..p {
        let d = rng.gen_range(0..=i.min(j));
        let mut earlier: Vec<usize> = order[..i].to_vec();
        earlier.shuffle(&mut rng);
        for &u in earlier.iter().take(d) {
            let mag: f64 = rng.gen_range(0.5..1.0);
            let w = if rng.gen::<bool>() { mag } else { -mag };
            edges.push((u, order[i], w));
        }
    }
    WeightedDag::new(p, &edges).unwrap()
}

/// Model on a generic DAG with Gaussian-offset errors at order `k`.
pub fn offset_sem(p: usize, j: usize, k: usize, seed: u64) -> Sem {
    Sem::with_offset_errors(generic_dag(p, j, seed), k, seed ^ 0xA5A5)
}

/// `(v, u, C)` with `u` not a parent of `v` and `pa(v) <= C <= V \ (de(v) + {v, u})`.
pub fn zero_configurations(o: &PopulationOracle) -> Vec<(usize, usize, Vec<usize>)> {
    let dag = o.sem().wdag().dag();
    let p = dag.num_nodes();
    let mut out = Vec::new();
    for v in 0..p {
        let pa: BTreeSet<usize> = dag.parents(v).unwrap().iter().copied().collect();
        let de = o.descendants(v);
        for u in 0..p {
            if u == v || pa.contains(&u) {
                continue;
            }
            let free: Vec<usize> = (0..p)
                .filter(|&c| c != v && c != u && !de.contains(&c) && !pa.contains(&c))
                .collect();
            for extra in up_to(&free, free.len()) {
                let mut c: Vec<usize> = pa.iter().copied().chain(extra).collect();
                c.sort_unstable();
                out.push((v, u, c));
            }
        }
    }
    out
}

/// Every `(v, u, C)` with `C` drawn from the remaining nodes.
pub fn all_configurations(p: usize) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for v in 0..p {
        for u in 0..p {
            if u == v {
                continue;
            }
            let rest: Vec<usize> = (0..p).filter(|&c| c != v && c != u).collect();
            for c in up_to(&rest, rest.len()) {
                out.push((v, u, c));
            }
        }
    }
    out
}

/// Smallest `|tau_{v.C -> p}|` over edges `p -> v` and `C` of at most `j`
/// non-descendants of `v` other than `p`.
pub fn gamma(o: &PopulationOracle, j: usize, k: usize) -> f64 {
    let dag = o.sem().wdag().dag();
    let p = dag.num_nodes();
    let mut g = f64::INFINITY;
    for (u, v) in dag.edges() {
        let de = o.descendants(v);
        let ground: Vec<usize> = (0..p).filter(|&c| c != u && c != v && !de.contains(&c)).collect();
        for c in up_to(&ground, j) {
            g = g.min(o.population_tau(v, u, &c, k).unwrap().abs());
        }
    }
    g
}
