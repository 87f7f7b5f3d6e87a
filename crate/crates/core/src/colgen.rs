//! Column-generation teacher for the pattern-based maximum multi-commodity
//! flow problem, plus exact maximum-weight independent set pricing.
//!
//! Master problem over flows `f_k(e)` and pattern shares `alpha_m`:
//!
//! ```text
//! max  sum_k [ sum_{e out of s_k} f_k(e) - sum_{e into s_k} f_k(e) ]
//!      sum_k f_k(e)                          <= c(e)      for all e
//!      inflow_k(v) - outflow_k(v)             = 0         v not in {s_k, t_k}
//!      sum_k f_k(e) - sum_m alpha_m p_m(e)   <= 0         for all e   (duals pi)
//!      sum_m alpha_m                          = 1                     (dual sigma)
//! ```

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::BitSet;
use crate::interference::{build_conflict_graph, ConflictGraph, TransmissionPattern};
use crate::lpsolve::{LpError, LpStatus, Relation, Simplex};
use crate::netgen::{NetgenError, NetworkInstance};
use crate::real::{reals, unreal, Real};

/// Pricing must beat `sigma` by this much to add a column.
pub const PRICING_TOL: f64 = 1e-7;
pub const DEFAULT_ITERATION_CAP: usize = 200;
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ColgenError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("restricted master is {0:?}; the singleton pool should always be feasible")]
    Master(LpStatus),
    #[error("instance has no demands")]
    NoDemands,
    #[error("instance has no links")]
    NoLinks,
    #[error(transparent)]
    Instance(#[from] NetgenError),
}

#[derive(Clone, Copy, Debug)]
pub struct ColgenOptions {
    pub iteration_cap: usize,
    pub node_budget: u64,
}

impl Default for ColgenOptions {
    fn default() -> Self {
        ColgenOptions { iteration_cap: DEFAULT_ITERATION_CAP, node_budget: DEFAULT_NODE_BUDGET }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualPrices {
    /// Duals of the per-link interference rows.
    pub pi: Vec<f64>,
    /// Dual of the convexity row.
    pub sigma: f64,
}

/// Teacher output. `flows[k][e]` is commodity `k` on link `e`; `alphas[m]`
/// is the time share of `patterns[m]`.
#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub flows: Vec<Vec<f64>>,
    pub patterns: Vec<TransmissionPattern>,
    pub alphas: Vec<f64>,
    pub throughput: f64,
    pub link_total_flow: Vec<f64>,
    pub labels: Vec<u8>,
    pub normalized_flow: Vec<f64>,
    pub iterations: usize,
    pub solve_time_s: f64,
    /// Pricing certified optimality (no improving pattern).
    pub converged: bool,
    /// Pricing fell back to the greedy heuristic at least once.
    pub possibly_suboptimal: bool,
    /// Master objective after each iteration.
    pub history: Vec<f64>,
}

/// Flow below `1e-6 * max capacity` counts as unused.
pub fn flow_epsilon(inst: &NetworkInstance) -> f64 {
    1e-6 * inst.max_capacity()
}

/// One singleton pattern per link.
pub fn init_patterns(cg: &ConflictGraph, capacities: &[f64]) -> Vec<TransmissionPattern> {
    (0..cg.link_count()).map(|e| TransmissionPattern::singleton(e, capacities)).collect()
}

/// Incrementally grown restricted master problem.
pub struct Master<'a> {
    inst: &'a NetworkInstance,
    lp: Simplex,
    n_links: usize,
    n_comm: usize,
    interference_row0: usize,
    convexity_row: usize,
    pub patterns: Vec<TransmissionPattern>,
}

impl<'a> Master<'a> {
    pub fn new(inst: &'a NetworkInstance, patterns: Vec<TransmissionPattern>) -> Result<Self, ColgenError> {
        let e_count = inst.link_count();
        let k_count = inst.demands.len();
        if k_count == 0 {
            return Err(ColgenError::NoDemands);
        }
        if e_count == 0 {
            return Err(ColgenError::NoLinks);
        }
        let n = inst.node_count();
        let mut relations = Vec::new();
        let mut rhs = Vec::new();
        for l in &inst.links {
            relations.push(Relation::Le);
            rhs.push(l.capacity);
        }
        // conservation rows: (k, v) for every non-terminal v
        let mut cons_row = vec![vec![usize::MAX; n]; k_count];
        for (k, d) in inst.demands.iter().enumerate() {
            for v in 0..n {
                if v != d.source && v != d.sink {
                    cons_row[k][v] = relations.len();
                    relations.push(Relation::Eq);
                    rhs.push(0.0);
                }
            }
        }
        let interference_row0 = relations.len();
        for _ in 0..e_count {
            relations.push(Relation::Le);
            rhs.push(0.0);
        }
        let convexity_row = relations.len();
        relations.push(Relation::Eq);
        rhs.push(1.0);

        let mut lp = Simplex::new(&relations, &rhs)?;
        for (k, d) in inst.demands.iter().enumerate() {
            for (e, l) in inst.links.iter().enumerate() {
                let mut entries = vec![(e, 1.0), (interference_row0 + e, 1.0)];
                if cons_row[k][l.dst] != usize::MAX {
                    entries.push((cons_row[k][l.dst], 1.0));
                }
                if cons_row[k][l.src] != usize::MAX {
                    entries.push((cons_row[k][l.src], -1.0));
                }
                let cost = if l.src == d.source {
                    1.0
                } else if l.dst == d.source {
                    -1.0
                } else {
                    0.0
                };
                lp.add_column(cost, &entries)?;
            }
        }
        let mut master = Master {
            inst,
            lp,
            n_links: e_count,
            n_comm: k_count,
            interference_row0,
            convexity_row,
            patterns: Vec::new(),
        };
        for p in patterns {
            master.add_pattern(p)?;
        }
        Ok(master)
    }

    pub fn add_pattern(&mut self, p: TransmissionPattern) -> Result<(), ColgenError> {
        let mut entries: Vec<(usize, f64)> =
            p.active.iter().map(|&e| (self.interference_row0 + e, -p.rates[e])).collect();
        entries.push((self.convexity_row, 1.0));
        self.lp.add_column(0.0, &entries)?;
        self.patterns.push(p);
        Ok(())
    }

    /// Solves the current restricted master.
    pub fn solve(&mut self) -> Result<MasterSolution, ColgenError> {
        if self.patterns.is_empty() {
            return Err(ColgenError::Master(LpStatus::Infeasible));
        }
        let sol = self.lp.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(ColgenError::Master(sol.status));
        }
        let ek = self.n_links * self.n_comm;
        let flows: Vec<Vec<f64>> =
            (0..self.n_comm).map(|k| sol.primal[k * self.n_links..(k + 1) * self.n_links].to_vec()).collect();
        let alphas = sol.primal[ek..].to_vec();
        let pi: Vec<f64> = sol.dual[self.interference_row0..self.interference_row0 + self.n_links]
            .iter()
            .map(|p| p.max(0.0))
            .collect();
        let sigma = sol.dual[self.convexity_row];
        Ok(MasterSolution { flows, alphas, throughput: sol.objective_value, duals: DualPrices { pi, sigma } })
    }

    pub fn instance(&self) -> &NetworkInstance {
        self.inst
    }
}

#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub flows: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub throughput: f64,
    pub duals: DualPrices,
}

/// Builds and solves the restricted master over `patterns` once.
pub fn solve_master(inst: &NetworkInstance, patterns: &[TransmissionPattern]) -> Result<MasterSolution, ColgenError> {
    Master::new(inst, patterns.to_vec())?.solve()
}

/// Result of the weighted independent set search.
#[derive(Clone, Debug, PartialEq)]
pub struct MwisResult {
    pub set: Vec<usize>,
    pub value: f64,
    /// False when the node budget ran out and the greedy set was returned.
    pub exact: bool,
    pub nodes: u64,
}

/// Maximum-weight independent set by branch and bound. Vertices are ordered
/// by weight (descending); the bound is the current weight plus the weight
/// of every remaining compatible candidate.
pub fn max_weight_independent_set(cg: &ConflictGraph, weights: &[f64], node_budget: u64) -> MwisResult {
    let mut order: Vec<usize> = (0..cg.link_count()).filter(|&e| weights[e] > 0.0).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let n = order.len();
    let w: Vec<f64> = order.iter().map(|&e| weights[e]).collect();
    // conflict rows in the sorted index space
    let mut rank = vec![usize::MAX; cg.link_count()];
    for (i, &e) in order.iter().enumerate() {
        rank[e] = i;
    }
    let adj: Vec<BitSet> = order
        .iter()
        .map(|&e| {
            let mut row = BitSet::new(n);
            for f in cg.row(e).iter() {
                if rank[f] != usize::MAX {
                    row.insert(rank[f]);
                }
            }
            row
        })
        .collect();

    // greedy incumbent
    let mut greedy = Vec::new();
    let mut blocked = BitSet::new(n);
    for i in 0..n {
        if !blocked.contains(i) {
            greedy.push(i);
            for j in adj[i].iter() {
                blocked.insert(j);
            }
        }
    }
    let greedy_value: f64 = greedy.iter().map(|&i| w[i]).sum();

    struct Search<'s> {
        w: &'s [f64],
        adj: &'s [BitSet],
        best: f64,
        best_set: Vec<usize>,
        current: Vec<usize>,
        nodes: u64,
        budget: u64,
        aborted: bool,
    }
    impl Search<'_> {
        fn branch(&mut self, cands: BitSet, value: f64) {
            self.nodes += 1;
            if self.nodes > self.budget {
                self.aborted = true;
                return;
            }
            let Some(v) = cands.first() else {
                if value > self.best {
                    self.best = value;
                    self.best_set = self.current.clone();
                }
                return;
            };
            let bound: f64 = value + cands.iter().map(|i| self.w[i]).sum::<f64>();
            if bound <= self.best {
                return;
            }
            let mut rest = cands.clone();
            rest.remove(v);
            let with = rest.difference(&self.adj[v]);
            self.current.push(v);
            self.branch(with, value + self.w[v]);
            self.current.pop();
            if self.aborted {
                return;
            }
            self.branch(rest, value);
        }
    }
    let mut s = Search {
        w: &w,
        adj: &adj,
        best: greedy_value,
        best_set: greedy.clone(),
        current: Vec::new(),
        nodes: 0,
        budget: node_budget,
        aborted: false,
    };
    s.branch(BitSet::full(n), 0.0);
    let mut set: Vec<usize> = s.best_set.iter().map(|&i| order[i]).collect();
    set.sort_unstable();
    MwisResult { set, value: s.best, exact: !s.aborted, nodes: s.nodes }
}

/// Pricing outcome.
#[derive(Clone, Debug)]
pub struct Priced {
    pub pattern: Option<TransmissionPattern>,
    pub value: f64,
    pub exact: bool,
}

/// Best pattern under `pi_e * c_e` weights; `None` when it cannot beat `sigma`.
pub fn price(cg: &ConflictGraph, capacities: &[f64], duals: &DualPrices, node_budget: u64) -> Priced {
    let weights: Vec<f64> = duals.pi.iter().zip(capacities).map(|(p, c)| p * c).collect();
    let r = max_weight_independent_set(cg, &weights, node_budget);
    let pattern = (r.value > duals.sigma + PRICING_TOL && !r.set.is_empty())
        .then(|| TransmissionPattern::new(r.set.clone(), capacities));
    Priced { pattern, value: r.value, exact: r.exact }
}

/// Runs column generation to convergence (or the iteration cap).
pub fn run_colgen(inst: &NetworkInstance, opts: &ColgenOptions) -> Result<FlowSolution, ColgenError> {
    let start = Instant::now();
    let cg = build_conflict_graph(inst);
    let caps = inst.capacities();
    let mut master = Master::new(inst, init_patterns(&cg, &caps))?;
    let mut history: Vec<f64> = Vec::new();
    let mut possibly_suboptimal = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut sol = master.solve()?;
    loop {
        iterations += 1;
        if let Some(&prev) = history.last() {
            debug_assert!(sol.throughput >= prev - 1e-9 * prev.max(1.0), "master objective decreased: {prev} -> {}", sol.throughput);
        }
        history.push(sol.throughput);
        if iterations > opts.iteration_cap {
            break;
        }
        let priced = price(&cg, &caps, &sol.duals, opts.node_budget);
        possibly_suboptimal |= !priced.exact;
        match priced.pattern {
            Some(p) if !master.patterns.iter().any(|q| q.active == p.active) => {
                master.add_pattern(p)?;
                sol = match master.solve() {
                    Err(ColgenError::Lp(LpError::SingularBasis)) => {
                        log::debug!("singular warm basis at iteration {iterations}; cold restart");
                        master = Master::new(inst, std::mem::take(&mut master.patterns))?;
                        master.solve()?
                    }
                    r => r?,
                };
            }
            Some(_) => {
                // duplicate column: duals are numerically off, accept as converged
                converged = priced.exact;
                break;
            }
            None => {
                converged = priced.exact;
                break;
            }
        }
    }
    let link_total_flow: Vec<f64> =
        (0..inst.link_count()).map(|e| sol.flows.iter().map(|f| f[e]).sum()).collect();
    let (labels, normalized_flow) = extract_labels(&link_total_flow, flow_epsilon(inst));
    Ok(FlowSolution {
        flows: sol.flows,
        patterns: master.patterns,
        alphas: sol.alphas,
        throughput: sol.throughput.max(0.0),
        link_total_flow,
        labels,
        normalized_flow,
        iterations,
        solve_time_s: start.elapsed().as_secs_f64(),
        converged,
        possibly_suboptimal,
        history,
    })
}

/// Binary usage labels and flows normalized by the busiest link.
pub fn extract_labels(link_total_flow: &[f64], eps_flow: f64) -> (Vec<u8>, Vec<f64>) {
    let labels = link_total_flow.iter().map(|&f| u8::from(f > eps_flow)).collect();
    let max = link_total_flow.iter().copied().fold(0.0, f64::max);
    let normalized = if max > eps_flow {
        link_total_flow.iter().map(|&f| (f / max).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; link_total_flow.len()]
    };
    (labels, normalized)
}

/// Largest violation of the flow solution's defining constraints.
#[derive(Clone, Copy, Debug, Default)]
pub struct Violations {
    pub schedule_sum: f64,
    pub conservation: f64,
    pub capacity: f64,
    pub interference: f64,
    pub negativity: f64,
    pub throughput: f64,
    pub non_independent_patterns: usize,
}

impl Violations {
    pub fn within(&self, tol: f64) -> bool {
        self.schedule_sum <= tol
            && self.conservation <= tol
            && self.capacity <= tol
            && self.interference <= tol
            && self.negativity <= tol
            && self.throughput <= tol
            && self.non_independent_patterns == 0
    }
}

impl FlowSolution {
    /// Measures every constraint of the master against `inst`.
    pub fn violations(&self, inst: &NetworkInstance, cg: &ConflictGraph) -> Violations {
        let mut v = Violations { schedule_sum: (self.alphas.iter().sum::<f64>() - 1.0).abs(), ..Default::default() };
        let n = inst.node_count();
        let mut demand_total = 0.0;
        for (k, d) in inst.demands.iter().enumerate() {
            let mut net_out = vec![0.0; n];
            for (e, l) in inst.links.iter().enumerate() {
                let f = self.flows[k][e];
                v.negativity = v.negativity.max(-f);
                net_out[l.src] += f;
                net_out[l.dst] -= f;
            }
            for (node, r) in net_out.iter().enumerate() {
                if node != d.source && node != d.sink {
                    v.conservation = v.conservation.max(r.abs());
                }
            }
            demand_total += net_out[d.source];
        }
        v.throughput = (demand_total - self.throughput).abs();
        for (e, l) in inst.links.iter().enumerate() {
            let total: f64 = self.flows.iter().map(|f| f[e]).sum();
            v.capacity = v.capacity.max(total - l.capacity);
            let scheduled: f64 = self.patterns.iter().zip(&self.alphas).map(|(p, a)| a * p.rates[e]).sum();
            v.interference = v.interference.max(total - scheduled);
        }
        for a in &self.alphas {
            v.negativity = v.negativity.max(-a);
        }
        v.non_independent_patterns =
            self.patterns.iter().filter(|p| !cg.is_independent_set(&p.active).unwrap_or(false)).count();
        v
    }
}

/// Teacher-labelled case: the JSONL row written by `solve`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub nodes: Vec<[Real; 2]>,
    pub links: Vec<(usize, usize, Real)>,
    pub demands: Vec<[usize; 2]>,
    pub ranges: [Real; 2],
    pub seed: u64,
    pub labels: Vec<u8>,
    pub normalized_flow: Vec<Real>,
    pub throughput: Real,
    pub solve_time_s: Real,
    pub iterations: usize,
}

impl LabeledRecord {
    pub fn new(inst: &NetworkInstance, sol: &FlowSolution) -> Self {
        let f = crate::netgen::InstanceFile::from(inst);
        LabeledRecord {
            nodes: f.nodes,
            links: f.links,
            demands: f.demands,
            ranges: f.ranges,
            seed: f.seed,
            labels: sol.labels.clone(),
            normalized_flow: reals(&sol.normalized_flow),
            throughput: Real(sol.throughput),
            solve_time_s: Real(sol.solve_time_s),
            iterations: sol.iterations,
        }
    }

    pub fn instance(&self) -> Result<NetworkInstance, NetgenError> {
        crate::netgen::InstanceFile {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            demands: self.demands.clone(),
            ranges: self.ranges,
            seed: self.seed,
        }
        .try_into()
    }

    pub fn normalized_flow(&self) -> Vec<f64> {
        unreal(&self.normalized_flow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::build_links;
    use crate::netgen::{generate, Demand, DirectedLink, Family, GeneratorConfig, Point2D};

    pub(crate) fn relay() -> NetworkInstance {
        // 0 - 1 - 2 on a line, one commodity 0 -> 2, unit capacities
        let nodes: Vec<Point2D> = (0..3).map(|i| Point2D::new(i as f64, 0.0)).collect();
        let links = build_links(&nodes, 1.0, |_| 1.0);
        NetworkInstance { nodes, links, demands: vec![Demand::new(0, 2)], r_tx: 1.0, r_det: 1.0, seed: 0 }
    }

    #[test]
    fn singleton_pool() {
        let inst = relay();
        let cg = build_conflict_graph(&inst);
        let caps = inst.capacities();
        let pool = init_patterns(&cg, &caps);
        assert_eq!(pool.len(), 4);
        for (e, p) in pool.iter().enumerate() {
            assert_eq!(cg.is_independent_set(&p.active), Ok(true));
            assert_eq!(p.rates[e], caps[e]);
        }
    }

    #[test]
    fn two_node_master() {
        let inst = NetworkInstance {
            nodes: vec![Point2D::new(0.0, 0.0), Point2D::new(0.5, 0.0)],
            links: vec![
                DirectedLink { src: 0, dst: 1, capacity: 2.0 },
                DirectedLink { src: 1, dst: 0, capacity: 2.0 },
            ],
            demands: vec![Demand::new(0, 1)],
            r_tx: 1.0,
            r_det: 1.0,
            seed: 0,
        };
        let caps = inst.capacities();
        let sol = solve_master(&inst, &[TransmissionPattern::singleton(0, &caps)]).unwrap();
        assert!((sol.throughput - 2.0).abs() < 1e-9);
    }

    #[test]
    fn relay_master_halves_throughput() {
        let inst = relay();
        let caps = inst.capacities();
        let fwd = [inst.link_index(0, 1).unwrap(), inst.link_index(1, 2).unwrap()];
        let pool: Vec<_> = fwd.iter().map(|&e| TransmissionPattern::singleton(e, &caps)).collect();
        let sol = solve_master(&inst, &pool).unwrap();
        assert!((sol.throughput - 0.5).abs() < 1e-9);
        // complementary slackness: sigma equals the value of every used pattern
        for (p, a) in pool.iter().zip(&sol.alphas) {
            if *a > 1e-9 {
                assert!((p.value(&sol.duals.pi) - sol.duals.sigma).abs() < 1e-9);
            }
        }
        let best = pool.iter().map(|p| p.value(&sol.duals.pi)).fold(f64::MIN, f64::max);
        assert!((best - sol.duals.sigma).abs() < 1e-9);
    }

    #[test]
    fn relay_colgen_and_labels() {
        let inst = relay();
        let sol = run_colgen(&inst, &ColgenOptions::default()).unwrap();
        assert!((sol.throughput - 0.5).abs() < 1e-9);
        assert!(sol.converged);
        let f01 = inst.link_index(0, 1).unwrap();
        let f12 = inst.link_index(1, 2).unwrap();
        for e in 0..inst.link_count() {
            assert_eq!(sol.labels[e], u8::from(e == f01 || e == f12));
        }
        let max = sol.normalized_flow.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        let cg = build_conflict_graph(&inst);
        assert!(sol.violations(&inst, &cg).within(1e-7));
    }

    /// Exhaustive subset enumeration.
    fn brute_mwis(cg: &ConflictGraph, w: &[f64]) -> f64 {
        let n = cg.link_count();
        (0u32..1 << n)
            .filter_map(|mask| {
                let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                cg.is_independent_set(&set).unwrap().then(|| set.iter().map(|&i| w[i]).sum::<f64>())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn mwis_on_path_conflicts() {
        let cg = ConflictGraph::from_pairs(3, &[(0, 1), (1, 2)]);
        let r = max_weight_independent_set(&cg, &[1.0, 2.0, 1.0], DEFAULT_NODE_BUDGET);
        assert_eq!(r.value, brute_mwis(&cg, &[1.0, 2.0, 1.0]));
        assert_eq!(r.value, 2.0);
        let r = max_weight_independent_set(&cg, &[1.5, 2.0, 1.0], DEFAULT_NODE_BUDGET);
        assert_eq!(r.set, vec![0, 2]);
        assert!(r.exact);
    }

    #[test]
    fn mwis_complete_graph_picks_heaviest() {
        let pairs: Vec<_> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
        let cg = ConflictGraph::from_pairs(5, &pairs);
        let r = max_weight_independent_set(&cg, &[0.3, 0.9, 0.1, 0.8, 0.2], DEFAULT_NODE_BUDGET);
        assert_eq!(r.set, vec![1]);
    }

    #[test]
    fn mwis_matches_brute_force_on_random_graphs() {
        let mut rng = crate::rng::from_seed(3);
        use rand::Rng as _;
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let p = rng.random_range(0.1..0.9);
            let pairs: Vec<_> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|_| rng.random::<f64>() < p)
                .collect();
            let cg = ConflictGraph::from_pairs(n, &pairs);
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let r = max_weight_independent_set(&cg, &w, DEFAULT_NODE_BUDGET);
            assert!((r.value - brute_mwis(&cg, &w)).abs() < 1e-12);
            assert_eq!(cg.is_independent_set(&r.set), Ok(true));
        }
    }

    #[test]
    fn mwis_budget_exhaustion_falls_back_to_greedy() {
        // greedy takes the heavy middle link; the optimum is both ends
        let cg = ConflictGraph::from_pairs(3, &[(0, 1), (1, 2)]);
        let w = [1.0, 1.5, 1.0];
        let r = max_weight_independent_set(&cg, &w, 1);
        assert!(!r.exact);
        assert_eq!(r.set, vec![1]);
        let full = max_weight_independent_set(&cg, &w, DEFAULT_NODE_BUDGET);
        assert!(full.exact);
        assert_eq!(full.set, vec![0, 2]);
    }

    #[test]
    fn zero_duals_price_nothing() {
        let cg = ConflictGraph::from_pairs(3, &[(0, 1)]);
        let duals = DualPrices { pi: vec![0.0; 3], sigma: 0.0 };
        assert!(price(&cg, &[1.0, 1.0, 1.0], &duals, DEFAULT_NODE_BUDGET).pattern.is_none());
    }

    #[test]
    fn zero_flow_labels() {
        let (labels, nf) = extract_labels(&[0.0, 0.0, 1e-12], 1e-6);
        assert_eq!(labels, vec![0, 0, 0]);
        assert_eq!(nf, vec![0.0; 3]);
    }

    #[test]
    fn generated_instances_solve_validly_and_monotonically() {
        for seed in 0..6 {
            for fam in [Family::RandomGeometric, Family::Grid, Family::Waxman] {
                let cfg = GeneratorConfig { demand_count: 1 + (seed as usize % 3), ..GeneratorConfig::desk(fam, 16) };
                let inst = generate(&cfg, seed).unwrap();
                let sol = run_colgen(&inst, &ColgenOptions::default()).unwrap();
                let cg = build_conflict_graph(&inst);
                let v = sol.violations(&inst, &cg);
                assert!(v.within(1e-6), "{fam} seed {seed}: {v:?}");
                assert!(sol.history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
                assert!(sol.throughput > 0.0);
                assert!(sol.converged);
            }
        }
    }

    #[test]
    fn record_roundtrip() {
        let inst = relay();
        let sol = run_colgen(&inst, &ColgenOptions::default()).unwrap();
        let rec = LabeledRecord::new(&inst, &sol);
        let line = serde_json::to_string(&rec).unwrap();
        let back: LabeledRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.instance().unwrap(), inst);
        assert_eq!(back.labels, sol.labels);
        assert_eq!(back.throughput.0, sol.throughput);
    }
}
