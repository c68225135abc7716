mod common;

use common::{all_configurations, offset_sem, zero_configurations};
use hdlingam::{MomentCache, PopulationMoments, PopulationOracle};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tau_vanishes_when_parents_are_conditioned(p in 2usize..6, j in 1usize..4, seed in any::<u64>()) {
        let o = PopulationOracle::new(offset_sem(p, j, 4, seed)).unwrap();
        for (v, u, c) in zero_configurations(&o) {
            let t = o.population_tau(v, u, &c, 4).unwrap();
            prop_assert!(t.abs() < 1e-10, "tau({v},{u},{c:?}) = {t}");
        }
    }

    #[test]
    fn gaussian_errors_give_zero_without_confounding(p in 2usize..6, j in 1usize..4, seed in any::<u64>()) {
        let o = PopulationOracle::new(offset_sem(p, j, 4, seed).gaussianized()).unwrap();
        for (v, u, c) in all_configurations(p) {
            if o.no_confounding_aggregates(v, u, &c, 4).unwrap().is_some() {
                prop_assert!(o.population_tau(v, u, &c, 4).unwrap().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_and_plug_in_match_oracle(p in 2usize..6, j in 1usize..4, seed in any::<u64>()) {
        let o = PopulationOracle::new(offset_sem(p, j, 4, seed)).unwrap();
        let pm = PopulationMoments::new(o.clone());
        let cache = MomentCache::new(&pm, 4);
        for (v, u, c) in all_configurations(p) {
            let exact = o.population_tau(v, u, &c, 4).unwrap();
            if let Some(cf) = o.population_tau_closed_form(v, u, &c, 4).unwrap() {
                prop_assert!((cf - exact).abs() < 1e-10);
            }
            prop_assert!((cache.tau_hat(v, u, &c, 4).unwrap() - exact).abs() < 1e-10);
        }
    }
}

#[test]
fn order_three_statistic_vanishes_on_parent_sets() {
    for seed in 0..10 {
        let o = PopulationOracle::new(offset_sem(5, 2, 3, seed)).unwrap();
        for (v, u, c) in zero_configurations(&o) {
            assert!(o.population_tau(v, u, &c, 3).unwrap().abs() < 1e-10);
        }
    }
}

#[test]
fn generic_models_are_parentally_faithful() {
    let faithful = (0..20)
        .filter(|&s| {
            let o = PopulationOracle::new(offset_sem(6, 3, 4, s)).unwrap();
            o.is_parentally_faithful(3).unwrap()
        })
        .count();
    assert!(faithful >= 15, "only {faithful} of 20 faithful");
}
