#![allow(dead_code)]

use talf_core::interference::{build_conflict_graph, ConflictGraph};
use talf_core::lpsolve::{solve_lp, LinearProgram, LpStatus};
use talf_core::netgen::{generate, Demand, DirectedLink, Family, GeneratorConfig, NetworkInstance, Point2D};
use talf_core::rng;

use rand::seq::SliceRandom;

pub const FAMILIES: [Family; 3] = [Family::Grid, Family::RandomGeometric, Family::Waxman];

/// All maximal independent sets by brute force.
pub fn maximal_independent_sets(cg: &ConflictGraph) -> Vec<Vec<usize>> {
    let m = cg.link_count();
    assert!(m <= 16);
    let independent = |set: u32| {
        (0..m).all(|a| set & (1 << a) == 0 || (a + 1..m).all(|b| set & (1 << b) == 0 || !cg.conflicts(a, b)))
    };
    (1u32..(1 << m))
        .filter(|&s| independent(s) && (0..m).all(|e| s & (1 << e) != 0 || !independent(s | (1 << e))))
        .map(|s| (0..m).filter(|&e| s & (1 << e) != 0).collect())
        .collect()
}

/// Optimal throughput with every maximal pattern in the LP.
pub fn enumeration_throughput(inst: &NetworkInstance) -> f64 {
    let pats = maximal_independent_sets(&build_conflict_graph(inst));
    let (m, k, n) = (inst.link_count(), inst.demands.len(), inst.node_count());
    let nv = k * m + pats.len();
    let mut obj = vec![0.0; nv];
    for (c, d) in inst.demands.iter().enumerate() {
        for (e, l) in inst.links.iter().enumerate() {
            obj[c * m + e] = f64::from(l.src == d.source) - f64::from(l.dst == d.source);
        }
    }
    let mut lp = LinearProgram::new(obj);
    for (e, l) in inst.links.iter().enumerate() {
        let mut row = vec![0.0; nv];
        (0..k).for_each(|c| row[c * m + e] = 1.0);
        lp = lp.le(row.clone(), l.capacity);
        for (p, set) in pats.iter().enumerate() {
            if set.contains(&e) {
                row[k * m + p] = -l.capacity;
            }
        }
        lp = lp.le(row, 0.0);
    }
    for (c, d) in inst.demands.iter().enumerate() {
        for v in (0..n).filter(|&v| v != d.source && v != d.sink) {
            let mut row = vec![0.0; nv];
            for (e, l) in inst.links.iter().enumerate() {
                row[c * m + e] = f64::from(l.dst == v) - f64::from(l.src == v);
            }
            lp = lp.eq(row, 0.0);
        }
    }
    let mut row = vec![0.0; nv];
    row[k * m..].iter_mut().for_each(|a| *a = 1.0);
    let sol = solve_lp(&lp.eq(row, 1.0)).expect("enumeration LP");
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective_value
}

/// A generated instance with at most `max_links` links, searching seeds
/// from `seed` on.
pub fn small_instance(family: Family, demands: usize, max_links: usize, seed: u64) -> NetworkInstance {
    for s in seed.. {
        let nodes = if family == Family::Grid { 4 } else { 4 + (s % 3) as usize };
        let cfg = GeneratorConfig { demand_count: demands, ..GeneratorConfig::desk(family, nodes) };
        if let Ok(inst) = generate(&cfg, s) {
            if inst.link_count() <= max_links {
                return inst;
            }
        }
    }
    unreachable!()
}

/// Node relabelling plus link shuffle; `order[j]` is the original index of
/// new link `j`.
pub fn relabel(inst: &NetworkInstance, seed: u64) -> (NetworkInstance, Vec<usize>) {
    let mut r = rng::from_seed(seed);
    let n = inst.node_count();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let mut nodes = vec![Point2D::new(0.0, 0.0); n];
    for (i, p) in inst.nodes.iter().enumerate() {
        nodes[perm[i]] = *p;
    }
    let mut order: Vec<usize> = (0..inst.link_count()).collect();
    order.shuffle(&mut r);
    let links = order
        .iter()
        .map(|&e| {
            let l = inst.links[e];
            DirectedLink { src: perm[l.src], dst: perm[l.dst], capacity: l.capacity }
        })
        .collect();
    let demands = inst.demands.iter().map(|d| Demand::new(perm[d.source], perm[d.sink])).collect();
    (NetworkInstance { nodes, links, demands, ..inst.clone() }, order)
}
