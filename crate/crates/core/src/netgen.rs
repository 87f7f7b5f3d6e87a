//! Problem instance generation: node placement for the three topology
//! families, Shannon-style link rates, rate perturbation and demand sampling.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interference::build_links;
use crate::real::Real;
use crate::rng::{self, Rng};

/// Placement attempts before giving up on connectivity.
pub const MAX_PLACEMENT_RETRIES: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum NetgenError {
    #[error("{family} placement stayed disconnected after {attempts} attempts")]
    RetryCapExceeded { family: Family, attempts: usize },
    #[error("grid family needs a p x q node count with p, q >= 2, got {0}")]
    NonRectangularGrid(usize),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("found only {found} of {requested} routable demand pairs")]
    NotEnoughDemands { requested: usize, found: usize },
    #[error("rate is undefined for non-positive distance {0}")]
    NonPositiveDistance(f64),
    #[error("malformed instance: {0}")]
    Malformed(String),
}

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn dist(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectedLink {
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Demand {
    pub source: NodeId,
    pub sink: NodeId,
}

impl Demand {
    pub fn new(source: NodeId, sink: NodeId) -> Self {
        Demand { source, sink }
    }
}

/// A wireless flow network: positioned nodes, directed capacitated links and
/// the commodity endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkInstance {
    pub nodes: Vec<Point2D>,
    pub links: Vec<DirectedLink>,
    pub demands: Vec<Demand>,
    pub r_tx: f64,
    pub r_det: f64,
    pub seed: u64,
}

impl NetworkInstance {
    /// Hand-placed instance with default channel constants (snr0 100,
    /// path-loss exponent 3) and seed 0.
    pub fn from_positions(positions: &[(f64, f64)], r_tx: f64, r_det: f64, demands: &[(NodeId, NodeId)]) -> Self {
        let nodes: Vec<Point2D> = positions.iter().map(|&(x, y)| Point2D::new(x, y)).collect();
        let links = build_links(&nodes, r_tx, |d| shannon_rate(d, 100.0, 3.0).expect("positive distance"));
        let demands = demands.iter().map(|&(s, t)| Demand::new(s, t)).collect();
        NetworkInstance { nodes, links, demands, r_tx, r_det, seed: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    pub fn max_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    /// Index of link (src, dst), if present.
    pub fn link_index(&self, src: NodeId, dst: NodeId) -> Option<usize> {
        self.links.iter().position(|l| l.src == src && l.dst == dst)
    }

    /// Outgoing link indices per node.
    pub fn out_links(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, l) in self.links.iter().enumerate() {
            out[l.src].push(i);
        }
        out
    }

    /// Directed reachability from `from`, restricted to links in `allowed`
    /// (all links when `None`).
    pub fn reachable(&self, from: NodeId, allowed: Option<&[bool]>) -> Vec<bool> {
        let out = self.out_links();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            for &e in &out[u] {
                if allowed.is_some_and(|a| !a[e]) {
                    continue;
                }
                let v = self.links[e].dst;
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn has_path(&self, s: NodeId, t: NodeId, allowed: Option<&[bool]>) -> bool {
        self.reachable(s, allowed)[t]
    }

    /// Whether the undirected support graph spans all nodes.
    pub fn is_connected(&self) -> bool {
        support_connected(self.nodes.len(), self.links.iter().map(|l| (l.src, l.dst)))
    }

    /// Structural checks: ranges, link geometry, symmetry, demand paths.
    pub fn validate(&self) -> Result<(), NetgenError> {
        let bad = |m: String| Err(NetgenError::Malformed(m));
        if !(self.r_tx > 0.0 && self.r_det >= self.r_tx) {
            return bad(format!("ranges r_tx={} r_det={}", self.r_tx, self.r_det));
        }
        if self.nodes.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return bad("non-finite node position".into());
        }
        for l in &self.links {
            if l.src == l.dst || l.src >= self.nodes.len() || l.dst >= self.nodes.len() {
                return bad(format!("bad link endpoints ({}, {})", l.src, l.dst));
            }
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                return bad(format!("link ({}, {}) capacity {}", l.src, l.dst, l.capacity));
            }
            if self.nodes[l.src].dist(&self.nodes[l.dst]) > self.r_tx + crate::interference::RANGE_TOL {
                return bad(format!("link ({}, {}) longer than r_tx", l.src, l.dst));
            }
            if self.link_index(l.dst, l.src).is_none() {
                return bad(format!("link ({}, {}) has no reverse", l.src, l.dst));
            }
        }
        for d in &self.demands {
            if d.source == d.sink || d.source >= self.nodes.len() || d.sink >= self.nodes.len() {
                return bad(format!("bad demand ({}, {})", d.source, d.sink));
            }
            if !self.has_path(d.source, d.sink, None) {
                return bad(format!("demand ({}, {}) has no path", d.source, d.sink));
            }
        }
        Ok(())
    }
}

pub(crate) fn support_connected(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    if n == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    RandomGeometric,
    Grid,
    Waxman,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::RandomGeometric => "random",
            Family::Grid => "grid",
            Family::Waxman => "waxman",
        })
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" | "random-geometric" => Ok(Family::RandomGeometric),
            "grid" => Ok(Family::Grid),
            "waxman" => Ok(Family::Waxman),
            other => Err(format!("unknown family '{other}' (grid|random|waxman)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub family: Family,
    pub node_count: usize,
    pub area_side: f64,
    pub grid_spacing: f64,
    pub grid_jitter_std: f64,
    pub waxman_beta: f64,
    pub waxman_alpha: f64,
    pub snr0: f64,
    pub pathloss_exp: f64,
    pub demand_count: usize,
    pub rate_noise: f64,
    pub r_tx: f64,
    pub r_det: f64,
}

/// Calibrated square side for the random-geometric family at unit r_tx,
/// targeting mean directed link counts of 48 at 16 nodes, 191 at 50 and
/// 240 at 64 while keeping connected placements likely.
fn random_area_side(nodes: usize) -> f64 {
    match nodes {
        16 => 3.6,
        32 => 4.6,
        50 => 5.5,
        64 => 6.2,
        n => 0.75 * (n as f64).sqrt() + 0.6,
    }
}

/// Calibrated square side for Waxman at unit candidate cutoff.
fn waxman_area_side(nodes: usize) -> f64 {
    match nodes {
        16 => 2.6,
        32 => 4.0,
        64 => 5.5,
        n => 0.7 * (n as f64).sqrt() - 0.2,
    }
}

impl GeneratorConfig {
    /// Desk-scale defaults for a family and node count. Distances are in
    /// units of the nominal transmission range.
    pub fn desk(family: Family, node_count: usize) -> Self {
        let base = GeneratorConfig {
            family,
            node_count,
            area_side: random_area_side(node_count),
            grid_spacing: 1.0,
            grid_jitter_std: 0.1,
            waxman_beta: 0.4,
            waxman_alpha: 0.1,
            snr0: 100.0,
            pathloss_exp: 3.0,
            demand_count: 1,
            rate_noise: 0.0,
            r_tx: 1.0,
            r_det: 1.5,
        };
        match family {
            Family::RandomGeometric => base,
            // spacing 1 with jitter 0.1: keep axis neighbours, drop diagonals
            Family::Grid => GeneratorConfig { r_tx: 1.2, r_det: 1.8, ..base },
            Family::Waxman => GeneratorConfig {
                area_side: waxman_area_side(node_count),
                waxman_beta: 0.9,
                waxman_alpha: 0.5,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), NetgenError> {
        let bad = |m: &str| Err(NetgenError::InvalidConfig(m.to_string()));
        if self.node_count < 2 {
            return bad("node_count must be >= 2");
        }
        if self.demand_count < 1 {
            return bad("demand_count must be >= 1");
        }
        if !(self.r_tx > 0.0 && self.r_det >= self.r_tx) {
            return bad("need r_det >= r_tx > 0");
        }
        if !(0.0..1.0).contains(&self.rate_noise) {
            return bad("rate_noise must lie in [0, 1)");
        }
        if self.family == Family::Waxman
            && !(self.waxman_alpha > 0.0 && self.waxman_beta > 0.0 && self.waxman_beta <= 1.0)
        {
            return bad("waxman beta must lie in (0, 1] and alpha > 0");
        }
        if self.snr0 <= 0.0 || self.pathloss_exp <= 0.0 {
            return bad("snr0 and pathloss_exp must be positive");
        }
        if self.family == Family::Grid && grid_shape(self.node_count).is_none() {
            return Err(NetgenError::NonRectangularGrid(self.node_count));
        }
        Ok(())
    }

    pub fn rate(&self, d: f64) -> Result<f64, NetgenError> {
        shannon_rate(d, self.snr0, self.pathloss_exp)
    }
}

/// `log2(1 + snr0 * d^-gamma)`: interference-free capacity under white noise.
pub fn shannon_rate(d: f64, snr0: f64, pathloss_exp: f64) -> Result<f64, NetgenError> {
    if d.is_nan() || d <= 0.0 {
        return Err(NetgenError::NonPositiveDistance(d));
    }
    Ok((snr0 * d.powf(-pathloss_exp)).ln_1p() / std::f64::consts::LN_2)
}

/// Waxman edge probability `beta * exp(-d / (alpha * max_dist))`.
pub fn waxman_probability(d: f64, max_dist: f64, beta: f64, alpha: f64) -> f64 {
    if max_dist <= 0.0 {
        return beta;
    }
    beta * (-d / (alpha * max_dist)).exp()
}

pub(crate) fn waxman_accept(rng: &mut Rng, d: f64, max_dist: f64, beta: f64, alpha: f64) -> bool {
    rng.random::<f64>() < waxman_probability(d, max_dist, beta, alpha)
}

/// Generates a full instance (topology and demands) for `cfg.family`.
pub fn generate(cfg: &GeneratorConfig, seed: u64) -> Result<NetworkInstance, NetgenError> {
    match cfg.family {
        Family::RandomGeometric => gen_random_geometric(cfg, seed),
        Family::Grid => gen_grid(cfg, seed),
        Family::Waxman => gen_waxman(cfg, seed),
    }
}

fn finish(
    cfg: &GeneratorConfig,
    nodes: Vec<Point2D>,
    links: Vec<DirectedLink>,
    seed: u64,
) -> Result<NetworkInstance, NetgenError> {
    let mut inst = NetworkInstance { nodes, links, demands: Vec::new(), r_tx: cfg.r_tx, r_det: cfg.r_det, seed };
    inst.demands = sample_demands(&inst, cfg.demand_count, rng::derive(seed, 1))?;
    Ok(inst)
}

fn uniform_square(rng: &mut Rng, n: usize, side: f64) -> Vec<Point2D> {
    (0..n).map(|_| Point2D::new(rng.random::<f64>() * side, rng.random::<f64>() * side)).collect()
}

fn rate_fn(cfg: &GeneratorConfig) -> impl Fn(f64) -> f64 + '_ {
    move |d| cfg.rate(d).expect("link lengths are positive")
}

pub fn gen_random_geometric(cfg: &GeneratorConfig, seed: u64) -> Result<NetworkInstance, NetgenError> {
    if cfg.family != Family::RandomGeometric {
        return Err(NetgenError::InvalidConfig(format!("expected random-geometric, got {}", cfg.family)));
    }
    cfg.validate()?;
    let mut rng = rng::from_seed(rng::derive(seed, 0));
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let nodes = uniform_square(&mut rng, cfg.node_count, cfg.area_side);
        let links = build_links(&nodes, cfg.r_tx, rate_fn(cfg));
        if support_connected(nodes.len(), links.iter().map(|l| (l.src, l.dst))) {
            return finish(cfg, nodes, links, seed);
        }
    }
    Err(NetgenError::RetryCapExceeded { family: cfg.family, attempts: MAX_PLACEMENT_RETRIES })
}

/// Most square p x q factorisation of `n` with both sides at least 2.
pub fn grid_shape(n: usize) -> Option<(usize, usize)> {
    let mut p = (n as f64).sqrt() as usize;
    while p >= 2 {
        if n.is_multiple_of(p) {
            return Some((p, n / p));
        }
        p -= 1;
    }
    None
}

pub fn gen_grid(cfg: &GeneratorConfig, seed: u64) -> Result<NetworkInstance, NetgenError> {
    if cfg.family != Family::Grid {
        return Err(NetgenError::InvalidConfig(format!("expected grid, got {}", cfg.family)));
    }
    cfg.validate()?;
    let (rows, cols) = grid_shape(cfg.node_count).ok_or(NetgenError::NonRectangularGrid(cfg.node_count))?;
    if cfg.grid_jitter_std.is_nan() || cfg.grid_jitter_std < 0.0 {
        return Err(NetgenError::InvalidConfig("grid_jitter_std must be >= 0".into()));
    }
    let mut rng = rng::from_seed(rng::derive(seed, 0));
    let jitter = Normal::new(0.0, cfg.grid_jitter_std).expect("finite std");
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let mut nodes = Vec::with_capacity(cfg.node_count);
        for r in 0..rows {
            for c in 0..cols {
                let (ex, ey) = if cfg.grid_jitter_std > 0.0 {
                    (jitter.sample(&mut rng), jitter.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                nodes.push(Point2D::new(r as f64 * cfg.grid_spacing + ex, c as f64 * cfg.grid_spacing + ey));
            }
        }
        let links = build_links(&nodes, cfg.r_tx, rate_fn(cfg));
        if support_connected(nodes.len(), links.iter().map(|l| (l.src, l.dst))) {
            return finish(cfg, nodes, links, seed);
        }
    }
    Err(NetgenError::RetryCapExceeded { family: cfg.family, attempts: MAX_PLACEMENT_RETRIES })
}

/// Waxman graph restricted to pairs within `r_tx`; `L` is the largest
/// pairwise node distance of the placement.
pub fn gen_waxman(cfg: &GeneratorConfig, seed: u64) -> Result<NetworkInstance, NetgenError> {
    if cfg.family != Family::Waxman {
        return Err(NetgenError::InvalidConfig(format!("expected waxman, got {}", cfg.family)));
    }
    cfg.validate()?;
    let mut rng = rng::from_seed(rng::derive(seed, 0));
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let nodes = uniform_square(&mut rng, cfg.node_count, cfg.area_side);
        let n = nodes.len();
        let mut max_dist = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                max_dist = max_dist.max(nodes[i].dist(&nodes[j]));
            }
        }
        let candidates = build_links(&nodes, cfg.r_tx, rate_fn(cfg));
        // decide each undirected pair once, at its (lo, hi) link
        let mut keep = vec![false; n * n];
        for l in candidates.iter().filter(|l| l.src < l.dst) {
            let d = nodes[l.src].dist(&nodes[l.dst]);
            if waxman_accept(&mut rng, d, max_dist, cfg.waxman_beta, cfg.waxman_alpha) {
                keep[l.src * n + l.dst] = true;
            }
        }
        let links: Vec<DirectedLink> = candidates
            .into_iter()
            .filter(|l| keep[l.src.min(l.dst) * n + l.src.max(l.dst)])
            .collect();
        if support_connected(n, links.iter().map(|l| (l.src, l.dst))) {
            return finish(cfg, nodes, links, seed);
        }
    }
    Err(NetgenError::RetryCapExceeded { family: cfg.family, attempts: MAX_PLACEMENT_RETRIES })
}

/// Multiplies every capacity by `1 + u`, `u ~ U(-rate_noise, rate_noise)`.
pub fn perturb_rates(inst: &NetworkInstance, rate_noise: f64, seed: u64) -> NetworkInstance {
    let mut out = inst.clone();
    if rate_noise <= 0.0 {
        return out;
    }
    let noise = rate_noise.min(1.0 - f64::EPSILON);
    let mut rng = rng::from_seed(seed);
    for l in &mut out.links {
        let u = rng.random_range(-noise..noise);
        l.capacity *= 1.0 + u;
    }
    out
}

/// Draws `demand_count` distinct ordered node pairs that are joined by a
/// directed path.
pub fn sample_demands(inst: &NetworkInstance, demand_count: usize, seed: u64) -> Result<Vec<Demand>, NetgenError> {
    let n = inst.node_count();
    let mut rng = rng::from_seed(seed);
    let reach: Vec<Vec<bool>> = (0..n).map(|s| inst.reachable(s, None)).collect();
    let routable = (0..n).flat_map(|s| (0..n).map(move |t| (s, t))).filter(|&(s, t)| s != t && reach[s][t]).count();
    if routable < demand_count {
        return Err(NetgenError::NotEnoughDemands { requested: demand_count, found: routable });
    }
    let mut demands: Vec<Demand> = Vec::with_capacity(demand_count);
    let mut attempts = 0usize;
    while demands.len() < demand_count {
        attempts += 1;
        if attempts > 1000 * demand_count.max(1) + n * n {
            return Err(NetgenError::NotEnoughDemands { requested: demand_count, found: demands.len() });
        }
        let s = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        if s == t || !reach[s][t] {
            continue;
        }
        let d = Demand::new(s, t);
        if !demands.contains(&d) {
            demands.push(d);
        }
    }
    Ok(demands)
}

/// On-disk instance layout, one JSON object per line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub nodes: Vec<[Real; 2]>,
    pub links: Vec<(usize, usize, Real)>,
    pub demands: Vec<[usize; 2]>,
    pub ranges: [Real; 2],
    pub seed: u64,
}

impl From<&NetworkInstance> for InstanceFile {
    fn from(inst: &NetworkInstance) -> Self {
        InstanceFile {
            nodes: inst.nodes.iter().map(|p| [Real(p.x), Real(p.y)]).collect(),
            links: inst.links.iter().map(|l| (l.src, l.dst, Real(l.capacity))).collect(),
            demands: inst.demands.iter().map(|d| [d.source, d.sink]).collect(),
            ranges: [Real(inst.r_tx), Real(inst.r_det)],
            seed: inst.seed,
        }
    }
}

impl TryFrom<InstanceFile> for NetworkInstance {
    type Error = NetgenError;
    fn try_from(f: InstanceFile) -> Result<Self, NetgenError> {
        let inst = NetworkInstance {
            nodes: f.nodes.iter().map(|p| Point2D::new(p[0].0, p[1].0)).collect(),
            links: f.links.iter().map(|&(src, dst, c)| DirectedLink { src, dst, capacity: c.0 }).collect(),
            demands: f.demands.iter().map(|d| Demand::new(d[0], d[1])).collect(),
            r_tx: f.ranges[0].0,
            r_det: f.ranges[1].0,
            seed: f.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl NetworkInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NetgenError> {
        let f: InstanceFile = serde_json::from_str(s).map_err(|e| NetgenError::Malformed(e.to_string()))?;
        f.try_into()
    }
}
