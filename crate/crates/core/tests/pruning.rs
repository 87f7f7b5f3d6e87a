use proptest::prelude::*;
use talf_core::colgen::ColgenOptions;
use talf_core::netgen::{generate, GeneratorConfig};
use talf_core::pipeline::{evaluate_case, prune, spanning_skeleton, PruneConfig, Reference};
use talf_core::{rng, Family};

use rand::Rng as _;

fn scores(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::from_seed(seed);
    (0..n).map(|_| r.random::<f64>()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reduced_instance_never_beats_the_original(seed in 0u64..5_000, alpha in 0.0f64..1.0, demands in 1usize..=3) {
        let cfg = GeneratorConfig { demand_count: demands, ..GeneratorConfig::desk(Family::RandomGeometric, 12) };
        let Ok(inst) = generate(&cfg, seed) else { return Ok(()) };
        let s = scores(inst.link_count(), seed);
        let opts = ColgenOptions::default();
        let reference = Reference::solve(&inst, &opts).unwrap();
        let labels = vec![0u8; inst.link_count()];
        let r = evaluate_case(&inst, &labels, &s, &reference, &PruneConfig::with_alpha(alpha), 0.0, &opts).unwrap();
        prop_assert!(r.throughput_reduced <= r.throughput_original + 1e-6);
        prop_assert!(r.approximation_ratio > 0.0 && r.approximation_ratio <= 1.0 + 1e-6);
    }

    #[test]
    fn kept_set_is_monotone_and_contains_the_skeleton(seed in 0u64..5_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let Ok(inst) = generate(&GeneratorConfig::desk(Family::Waxman, 16), seed) else { return Ok(()) };
        let s = scores(inst.link_count(), seed ^ 0xABCD);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = prune(&inst, &s, &PruneConfig::with_alpha(lo)).unwrap();
        let p_hi = prune(&inst, &s, &PruneConfig::with_alpha(hi)).unwrap();
        let skel = spanning_skeleton(&inst).unwrap();
        for e in 0..inst.link_count() {
            prop_assert!(!p_hi.mask[e] || p_lo.mask[e]);
            prop_assert!(!skel[e] || p_hi.mask[e]);
        }
        prop_assert!(p_hi.kept_fraction() <= p_lo.kept_fraction());
        prop_assert!(p_hi.instance.is_connected());
    }
}

#[test]
fn oracle_scores_keep_full_throughput_on_grids() {
    let opts = ColgenOptions::default();
    for seed in 0..5 {
        let inst = generate(&GeneratorConfig { demand_count: 2, ..GeneratorConfig::desk(Family::Grid, 16) }, seed).unwrap();
        let sol = talf_core::run_colgen(&inst, &opts).unwrap();
        let s: Vec<f64> = sol.labels.iter().map(|&y| f64::from(y)).collect();
        let reference = Reference { throughput: sol.throughput, t_original: sol.solve_time_s };
        let r = evaluate_case(&inst, &sol.labels, &s, &reference, &PruneConfig::default(), 0.0, &opts).unwrap();
        assert!((r.approximation_ratio - 1.0).abs() < 1e-6, "seed {seed}: {}", r.approximation_ratio);
        assert_eq!(r.accuracy, 1.0);
    }
}
