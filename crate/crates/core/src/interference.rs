//! Link construction from geometry and the protocol-model conflict graph
//! with half-duplex nodes.

use thiserror::Error;

use crate::bitset::BitSet;
use crate::netgen::{DirectedLink, NetworkInstance, Point2D};

/// Range comparisons are closed (`<=`) with this slack.
pub const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterferenceError {
    #[error("link index {index} out of range for {link_count} links")]
    IndexOutOfRange { index: usize, link_count: usize },
}

/// One directed link per ordered pair within `r_tx`, lexicographic by
/// `(src, dst)`.
pub fn build_links(positions: &[Point2D], r_tx: f64, rate_fn: impl Fn(f64) -> f64) -> Vec<DirectedLink> {
    let mut links = Vec::new();
    for (u, pu) in positions.iter().enumerate() {
        for (v, pv) in positions.iter().enumerate() {
            if u == v {
                continue;
            }
            let d = pu.dist(pv);
            if d > 0.0 && d <= r_tx + RANGE_TOL {
                links.push(DirectedLink { src: u, dst: v, capacity: rate_fn(d) });
            }
        }
    }
    links
}

/// Symmetric, irreflexive conflict relation over link indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConflictGraph {
    rows: Vec<BitSet>,
}

impl ConflictGraph {
    pub fn from_pairs(link_count: usize, pairs: &[(usize, usize)]) -> Self {
        let mut rows = vec![BitSet::new(link_count); link_count];
        for &(a, b) in pairs {
            if a != b {
                rows[a].insert(b);
                rows[b].insert(a);
            }
        }
        ConflictGraph { rows }
    }

    pub fn link_count(&self) -> usize {
        self.rows.len()
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        self.rows[a].contains(b)
    }

    /// Conflict neighbourhood of link `a`.
    pub fn row(&self, a: usize) -> &BitSet {
        &self.rows[a]
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(BitSet::count).sum::<usize>() / 2
    }

    pub fn is_independent_set(&self, links: &[usize]) -> Result<bool, InterferenceError> {
        let n = self.link_count();
        if let Some(&index) = links.iter().find(|&&i| i >= n) {
            return Err(InterferenceError::IndexOutOfRange { index, link_count: n });
        }
        for (i, &a) in links.iter().enumerate() {
            for &b in &links[i + 1..] {
                if self.conflicts(a, b) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Links `a = (u, v)` and `b = (u', v')` conflict when they share a node or
/// when either transmitter lies within `r_det` of the other link's receiver.
pub fn links_conflict(inst: &NetworkInstance, a: usize, b: usize) -> bool {
    if a == b {
        return false;
    }
    let (la, lb) = (&inst.links[a], &inst.links[b]);
    if la.src == lb.src || la.src == lb.dst || la.dst == lb.src || la.dst == lb.dst {
        return true;
    }
    let p = &inst.nodes;
    let lim = inst.r_det + RANGE_TOL;
    p[lb.src].dist(&p[la.dst]) <= lim || p[la.src].dist(&p[lb.dst]) <= lim
}

pub fn build_conflict_graph(inst: &NetworkInstance) -> ConflictGraph {
    let n = inst.link_count();
    let mut rows = vec![BitSet::new(n); n];
    for a in 0..n {
        for b in a + 1..n {
            if links_conflict(inst, a, b) {
                rows[a].insert(b);
                rows[b].insert(a);
            }
        }
    }
    ConflictGraph { rows }
}

/// An independent set of links together with its rate vector `p_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionPattern {
    pub active: Vec<usize>,
    pub rates: Vec<f64>,
}

impl TransmissionPattern {
    /// Builds the pattern for `active` (sorted, deduplicated).
    pub fn new(mut active: Vec<usize>, capacities: &[f64]) -> Self {
        active.sort_unstable();
        active.dedup();
        let mut rates = vec![0.0; capacities.len()];
        for &j in &active {
            rates[j] = capacities[j];
        }
        TransmissionPattern { active, rates }
    }

    pub fn singleton(link: usize, capacities: &[f64]) -> Self {
        Self::new(vec![link], capacities)
    }

    /// `sum_e weight[e] * rate[e]` over the active links.
    pub fn value(&self, weights: &[f64]) -> f64 {
        self.active.iter().map(|&j| weights[j] * self.rates[j]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{generate, Family, GeneratorConfig};

    fn line(n: usize, spacing: f64, r_tx: f64, r_det: f64) -> NetworkInstance {
        let nodes: Vec<Point2D> = (0..n).map(|i| Point2D::new(i as f64 * spacing, 0.0)).collect();
        let links = build_links(&nodes, r_tx, |_| 1.0);
        NetworkInstance { nodes, links, demands: vec![], r_tx, r_det, seed: 0 }
    }

    #[test]
    fn link_range_boundary_is_inclusive() {
        let far = [Point2D::new(0.0, 0.0), Point2D::new(1.0 + 1e-9, 0.0)];
        assert!(build_links(&far, 1.0, |_| 1.0).is_empty());
        let edge = [Point2D::new(0.0, 0.0), Point2D::new(1.0, 0.0)];
        let pairs: Vec<_> = build_links(&edge, 1.0, |_| 1.0).iter().map(|l| (l.src, l.dst)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn collinear_three_nodes_link_adjacent_only() {
        let inst = line(3, 1.0, 1.0, 1.0);
        let pairs: Vec<_> = inst.links.iter().map(|l| (l.src, l.dst)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn shared_node_conflicts() {
        let inst = line(3, 1.0, 1.0, 1.0);
        let cg = build_conflict_graph(&inst);
        let a = inst.link_index(0, 1).unwrap();
        let b = inst.link_index(1, 2).unwrap();
        assert!(cg.conflicts(a, b) && cg.conflicts(b, a));
    }

    #[test]
    fn distant_disjoint_links_do_not_conflict() {
        let nodes = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(1.0, 0.0),
            Point2D::new(10.0, 0.0),
            Point2D::new(11.0, 0.0),
        ];
        let links = build_links(&nodes, 1.0, |_| 1.0);
        let inst = NetworkInstance { nodes, links, demands: vec![], r_tx: 1.0, r_det: 2.0, seed: 0 };
        let cg = build_conflict_graph(&inst);
        let a = inst.link_index(0, 1).unwrap();
        let b = inst.link_index(2, 3).unwrap();
        assert!(!cg.conflicts(a, b));
        assert!(cg.conflicts(a, inst.link_index(1, 0).unwrap()));
    }

    #[test]
    fn line_with_wide_detection_is_complete() {
        let inst = line(3, 1.0, 1.0, 2.0);
        let cg = build_conflict_graph(&inst);
        // rule applied by hand: every pair either shares node 1 or is covered
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(cg.conflicts(a, b), a != b);
            }
        }
        assert_eq!(cg.edge_count(), 6);
    }

    #[test]
    fn receiver_side_detection() {
        // (0,1) and (3,2): transmitter 3 is 2 away from receiver 1
        let nodes = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(1.0, 0.0),
            Point2D::new(2.5, 0.0),
            Point2D::new(3.0, 0.0),
        ];
        let mut inst = NetworkInstance {
            links: build_links(&nodes, 1.0, |_| 1.0),
            nodes,
            demands: vec![],
            r_tx: 1.0,
            r_det: 2.0,
            seed: 0,
        };
        let a = inst.link_index(0, 1).unwrap();
        let b = inst.link_index(3, 2).unwrap();
        assert!(links_conflict(&inst, a, b));
        inst.r_det = 1.4;
        assert!(!links_conflict(&inst, a, b));
    }

    #[test]
    fn independent_set_checks() {
        let cg = ConflictGraph::from_pairs(3, &[(0, 1)]);
        assert_eq!(cg.is_independent_set(&[]), Ok(true));
        assert_eq!(cg.is_independent_set(&[2]), Ok(true));
        assert_eq!(cg.is_independent_set(&[0, 1]), Ok(false));
        assert_eq!(cg.is_independent_set(&[0, 2]), Ok(true));
        assert_eq!(
            cg.is_independent_set(&[5]),
            Err(InterferenceError::IndexOutOfRange { index: 5, link_count: 3 })
        );
    }

    #[test]
    fn generated_conflict_graphs_are_symmetric_and_irreflexive() {
        for seed in 0..10 {
            for fam in [Family::RandomGeometric, Family::Grid, Family::Waxman] {
                let inst = generate(&GeneratorConfig::desk(fam, 16), seed).unwrap();
                let cg = build_conflict_graph(&inst);
                for a in 0..cg.link_count() {
                    assert!(!cg.conflicts(a, a));
                    for b in 0..cg.link_count() {
                        assert_eq!(cg.conflicts(a, b), cg.conflicts(b, a));
                        let (la, lb) = (inst.links[a], inst.links[b]);
                        let shared = [la.src, la.dst].iter().any(|x| *x == lb.src || *x == lb.dst);
                        if a != b && shared {
                            assert!(cg.conflicts(a, b));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pattern_rates() {
        let p = TransmissionPattern::new(vec![2, 0, 2], &[3.0, 4.0, 5.0]);
        assert_eq!(p.active, vec![0, 2]);
        assert_eq!(p.rates, vec![3.0, 0.0, 5.0]);
        assert_eq!(p.value(&[1.0, 1.0, 2.0]), 13.0);
    }
}
