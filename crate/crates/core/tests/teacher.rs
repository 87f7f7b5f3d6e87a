mod common;

use common::{enumeration_throughput, relabel, small_instance, FAMILIES};
use proptest::prelude::*;
use talf_core::colgen::{run_colgen, ColgenOptions};
use talf_core::interference::build_conflict_graph;
use talf_core::netgen::{generate, Family, GeneratorConfig};

#[test]
fn relay_line_time_shares_the_middle_node() {
    // 0 -> 1 -> 2 with every link in conflict: half the time on each hop
    let inst = talf_core::NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 1.0, 1.5, &[(0, 2)]);
    let sol = run_colgen(&inst, &ColgenOptions::default()).unwrap();
    let c = inst.links[0].capacity;
    assert!((sol.throughput - c / 2.0).abs() < 1e-9, "{} vs {}", sol.throughput, c / 2.0);
    assert!(sol.converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn colgen_matches_enumeration(fam in 0usize..3, demands in 1usize..=3, seed in 0u64..10_000) {
        let inst = small_instance(FAMILIES[fam], demands, 12, seed);
        let sol = run_colgen(&inst, &ColgenOptions::default()).unwrap();
        let exact = enumeration_throughput(&inst);
        prop_assert!((sol.throughput - exact).abs() <= 1e-6, "colgen {} enumeration {}", sol.throughput, exact);
        prop_assert!(sol.converged && !sol.possibly_suboptimal);
    }

    #[test]
    fn solutions_are_feasible(fam in 0usize..3, demands in 1usize..=3, seed in 0u64..10_000) {
        let family = FAMILIES[fam];
        let n = if family == Family::Grid { 9 } else { 12 };
        let cfg = GeneratorConfig { demand_count: demands, ..GeneratorConfig::desk(family, n) };
        let Ok(inst) = generate(&cfg, seed) else { return Ok(()) };
        let sol = run_colgen(&inst, &ColgenOptions::default()).unwrap();
        let v = sol.violations(&inst, &build_conflict_graph(&inst));
        prop_assert!(v.schedule_sum <= 1e-7, "{v:?}");
        prop_assert!(v.within(1e-6), "{v:?}");
        prop_assert!(sol.history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn throughput_ignores_labelling(seed in 0u64..10_000, perm in any::<u64>()) {
        let inst = small_instance(Family::RandomGeometric, 2, 12, seed);
        let (p, _) = relabel(&inst, perm);
        let a = run_colgen(&inst, &ColgenOptions::default()).unwrap().throughput;
        let b = run_colgen(&p, &ColgenOptions::default()).unwrap().throughput;
        prop_assert!((a - b).abs() <= 1e-6);
    }
}
