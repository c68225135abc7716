mod common;

use common::{gamma, offset_sem};
use hdlingam::aggregate::{t2_minima, MaxMinState};
use hdlingam::graph::{random_dag, WeightRule};
use hdlingam::order_search::{estimate_with_source, update_cutoff};
use hdlingam::rng::seeded;
use hdlingam::{
    estimate_graph, Dataset, EstimateConfig, MomentCache, PopulationMoments, PopulationOracle, SampleMoments, Sem, Stat,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn simulated(p: usize, j: usize, n: usize, seed: u64) -> (Sem, Dataset) {
    let g = random_dag(p, j, WeightRule::RANDOM, seed).unwrap();
    let sem = Sem::with_uniform_errors(g, seed ^ 1);
    let data = sem.simulate(n, seed ^ 2).unwrap();
    (sem, data)
}

#[test]
fn population_moments_recover_the_graph() {
    let mut done = 0;
    for seed in 0..40u64 {
        let sem = offset_sem(6, 2, 4, seed);
        let o = PopulationOracle::new(sem.clone()).unwrap();
        let g = gamma(&o, 2, 4);
        if !o.is_parentally_faithful(2).unwrap() || g <= 1e-6 {
            continue;
        }
        let pm = PopulationMoments::new(o);
        for stat in [Stat::Minmax, Stat::Maxmin] {
            let cfg = EstimateConfig { fixed_cutoff: Some(g / 2.0), tau_memo: true, ..EstimateConfig::new(2, stat) };
            let est = estimate_with_source(&pm, &cfg).unwrap();
            assert!(sem.wdag().dag().is_consistent_ordering(&est.ordering), "seed {seed} {stat}");
            assert_eq!(est.edges(), sem.wdag().dag().edges(), "seed {seed} {stat}");
        }
        done += 1;
        if done == 10 {
            break;
        }
    }
    assert_eq!(done, 10);
}

#[test]
fn both_statistics_are_consistent_at_large_n() {
    let (sem, data) = simulated(5, 2, 20_000, 3);
    for stat in [Stat::Minmax, Stat::Maxmin] {
        let est = estimate_graph(&data, &EstimateConfig::new(2, stat)).unwrap();
        assert!(sem.wdag().dag().is_consistent_ordering(&est.ordering), "{stat}: {:?}", est.ordering);
    }
}

#[test]
fn single_variable() {
    let data = Dataset::from_matrix(DMatrix::from_fn(50, 1, |i, _| (i as f64).sin())).unwrap();
    let est = estimate_graph(&data, &EstimateConfig::default()).unwrap();
    assert_eq!(est.ordering.as_slice(), &[0]);
    assert!(est.parents[0].is_empty());
}

#[test]
fn independent_columns_have_small_statistics() {
    let mut rng = seeded(8);
    let m = DMatrix::from_fn(20_000, 4, |_, _| rng.gen_range(-1.0..1.0));
    let data = Dataset::from_matrix(m).unwrap();
    let est = estimate_graph(&data, &EstimateConfig::new(2, Stat::Maxmin)).unwrap();
    assert!(est.diagnostics.root_stats.iter().all(|t| *t < 0.02), "{:?}", est.diagnostics.root_stats);
}

#[test]
fn too_few_rows_is_an_input_error() {
    let data = Dataset::from_matrix(DMatrix::from_element(1, 3, 1.0)).unwrap();
    assert!(matches!(estimate_graph(&data, &EstimateConfig::default()), Err(hdlingam::Error::Input(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn column_permutation_permutes_the_estimate(seed in any::<u64>()) {
        let (_, data) = simulated(6, 2, 2000, seed);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut seeded(seed ^ 9));
        let permuted = data.select_columns(&perm).unwrap();
        let cfg = EstimateConfig::new(2, Stat::Maxmin);
        let a = estimate_graph(&data, &cfg).unwrap();
        let b = estimate_graph(&permuted, &cfg).unwrap();
        let mapped: Vec<usize> = b.ordering.as_slice().iter().map(|&j| perm[j]).collect();
        prop_assert_eq!(mapped, a.ordering.as_slice().to_vec());
        for (j, &orig) in perm.iter().enumerate() {
            let mut pb: Vec<usize> = b.parents[j].iter().map(|&x| perm[x]).collect();
            pb.sort_unstable();
            prop_assert_eq!(&pb, &a.parents[orig]);
        }
    }

    #[test]
    fn cutoff_is_monotone_and_in_degree_capped(seed in any::<u64>(), j in 1usize..4, alpha in 0.0f64..1.5) {
        let (_, data) = simulated(7, 3, 500, seed);
        for stat in [Stat::Minmax, Stat::Maxmin] {
            let est = estimate_graph(&data, &EstimateConfig { alpha, ..EstimateConfig::new(j, stat) }).unwrap();
            prop_assert!(est.diagnostics.g.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(est.parents.iter().all(|p| p.len() <= j));
            let pos = est.ordering.positions();
            for (u, v) in est.edges() {
                prop_assert!(pos[u] < pos[v]);
            }
        }
    }

    #[test]
    fn update_cutoff_never_decreases(g in 0.0f64..10.0, alpha in 0.0f64..2.0, t in 0.0f64..10.0) {
        let next = update_cutoff(g, alpha, t);
        prop_assert!(next >= g);
        prop_assert!(next >= alpha * t);
    }

    #[test]
    fn incremental_table_matches_fresh_enumeration(seed in any::<u64>(), j in 1usize..4) {
        let p = 8;
        let (_, data) = simulated(p, 3, 300, seed);
        let sm = SampleMoments::new(data);
        let cache = MomentCache::new(&sm, 4);
        let mut rng = seeded(seed ^ 3);
        let v = rng.gen_range(0..p);
        let mut others: Vec<usize> = (0..p).filter(|&x| x != v).collect();
        others.shuffle(&mut rng);
        let mut cands: Vec<usize> = others[..2].to_vec();
        cands.sort_unstable();
        let mut live: Vec<usize> = others[2..].to_vec();
        live.sort_unstable();
        let mut st = MaxMinState::build(&cache, v, &cands, &live, j, 4).unwrap();
        while !live.is_empty() {
            let r = live.remove(rng.gen_range(0..live.len()));
            st.retire(r).unwrap();
            let mut pool = cands.clone();
            pool.push(r);
            let next: Vec<usize> = pool.into_iter().filter(|_| rng.gen_bool(0.7)).collect();
            cands = next;
            cands.sort_unstable();
            st.advance(&cache, r, &cands).unwrap();
            if live.is_empty() {
                break;
            }
            let fresh = t2_minima(&cache, v, &cands, &live, j, 4).unwrap();
            let inc = st.minima();
            prop_assert_eq!(inc.len(), fresh.len());
            for ((u, m, c), (fm, fc)) in inc.iter().zip(&fresh) {
                prop_assert!(live.contains(u));
                prop_assert_eq!(m.to_bits(), fm.to_bits());
                prop_assert_eq!(c, fc);
            }
        }
    }
}

#[test]
fn stale_updates_are_state_errors() {
    let (_, data) = simulated(5, 2, 200, 4);
    let sm = SampleMoments::new(data);
    let cache = MomentCache::new(&sm, 4);
    let mut st = MaxMinState::build(&cache, 0, &[1], &[2, 3, 4], 2, 4).unwrap();
    assert!(matches!(st.t2_update(&cache, 2, &[1, 2]), Err(hdlingam::Error::State(_))));
    st.retire(2).unwrap();
    assert!(matches!(st.t2_update(&cache, 2, &[1, 3]), Err(hdlingam::Error::State(_))));
    st.t2_update(&cache, 2, &[1, 2]).unwrap();
    assert!(matches!(st.t2_update(&cache, 2, &[1, 2]), Err(hdlingam::Error::State(_))));
}
