//! Deployment loop: score links, keep a spanning skeleton plus every
//! high scorer, back off until each demand is routable, solve the reduced
//! instance and account the time spent.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::colgen::{run_colgen, ColgenError, ColgenOptions};
use crate::netgen::NetworkInstance;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("instance support graph is disconnected")]
    Disconnected,
    #[error("scores ({scores}) and links ({links}) differ in length")]
    Length { scores: usize, links: usize },
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("no link set makes every demand routable")]
    BackoffExhausted,
    #[error("original throughput is zero; case excluded")]
    ZeroThroughput,
    #[error(transparent)]
    Colgen(#[from] ColgenError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneConfig {
    pub alpha: f64,
    pub use_spanning_tree: bool,
    pub backoff_step: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { alpha: 0.5, use_spanning_tree: true, backoff_step: 1 }
    }
}

impl PruneConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        PruneConfig { alpha, ..Self::default() }
    }
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Minimum spanning tree of the undirected support graph with weight
/// `1 / max(c(u,v), c(v,u))`; returns a keep-mask holding both directions
/// of every tree edge.
pub fn spanning_skeleton(inst: &NetworkInstance) -> Result<Vec<bool>> {
    let n = inst.node_count();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for l in &inst.links {
        let (u, v) = (l.src.min(l.dst), l.src.max(l.dst));
        let best = [inst.link_index(u, v), inst.link_index(v, u)]
            .into_iter()
            .flatten()
            .map(|e| inst.links[e].capacity)
            .fold(0.0, f64::max);
        // one entry per unordered pair
        if l.src == u || inst.link_index(u, v).is_none() {
            edges.push((1.0 / best, u, v));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut sets = DisjointSets((0..n).collect());
    let mut keep = vec![false; inst.link_count()];
    let mut joined = 0;
    for (_, u, v) in edges {
        if sets.union(u, v) {
            joined += 1;
            for e in [inst.link_index(u, v), inst.link_index(v, u)].into_iter().flatten() {
                keep[e] = true;
            }
        }
    }
    if joined + 1 != n {
        return Err(PipelineError::Disconnected);
    }
    Ok(keep)
}

/// Instance restricted to `keep`, with the original index of each kept link.
#[derive(Clone, Debug)]
pub struct PrunedInstance {
    pub instance: NetworkInstance,
    pub kept: Vec<usize>,
    pub mask: Vec<bool>,
}

impl PrunedInstance {
    pub fn from_mask(inst: &NetworkInstance, mask: Vec<bool>) -> Self {
        let kept: Vec<usize> = (0..inst.link_count()).filter(|&e| mask[e]).collect();
        let instance = NetworkInstance { links: kept.iter().map(|&e| inst.links[e]).collect(), ..inst.clone() };
        PrunedInstance { instance, kept, mask }
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept.len() as f64 / self.mask.len().max(1) as f64
    }
}

fn check_scores(inst: &NetworkInstance, scores: &[f64]) -> Result<()> {
    if scores.len() != inst.link_count() {
        return Err(PipelineError::Length { scores: scores.len(), links: inst.link_count() });
    }
    Ok(())
}

/// Keeps the skeleton (when enabled) and every link scoring at least `alpha`.
pub fn prune(inst: &NetworkInstance, scores: &[f64], cfg: &PruneConfig) -> Result<PrunedInstance> {
    check_scores(inst, scores)?;
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(PipelineError::Threshold(cfg.alpha));
    }
    let mut mask = if cfg.use_spanning_tree { spanning_skeleton(inst)? } else { vec![false; inst.link_count()] };
    for (m, &s) in mask.iter_mut().zip(scores) {
        *m |= s >= cfg.alpha;
    }
    Ok(PrunedInstance::from_mask(inst, mask))
}

fn all_routable(inst: &NetworkInstance, mask: &[bool]) -> bool {
    inst.demands.iter().all(|d| inst.has_path(d.source, d.sink, Some(mask)))
}

/// Restores pruned links in descending score order, `step` at a time,
/// until every demand has a directed path. Returns the mask and the
/// number of links added.
pub fn backoff(inst: &NetworkInstance, mask: &[bool], scores: &[f64], step: usize) -> Result<(Vec<bool>, usize)> {
    check_scores(inst, scores)?;
    let mut mask = mask.to_vec();
    let mut pending: Vec<usize> = (0..inst.link_count()).filter(|&e| !mask[e]).collect();
    pending.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut added = 0;
    let mut next = pending.into_iter();
    while !all_routable(inst, &mask) {
        let mut any = false;
        for e in next.by_ref().take(step.max(1)) {
            mask[e] = true;
            added += 1;
            any = true;
        }
        if !any {
            return Err(PipelineError::BackoffExhausted);
        }
    }
    Ok((mask, added))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TimingBreakdown {
    pub t_inference: f64,
    pub t_reduced_instance: f64,
    pub t_backoff: f64,
    pub t_original: f64,
}

impl TimingBreakdown {
    pub fn effective(&self) -> f64 {
        self.t_inference + self.t_reduced_instance + self.t_backoff
    }
}

/// Classification quality of thresholded scores against usage labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision is 0 with no predicted positives; recall is 1 with no
/// actual positives.
pub fn classify(scores: &[f64], labels: &[u8], alpha: f64) -> Classification {
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= alpha, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let n = (tp + fp + fneg + tn).max(1) as f64;
    Classification {
        accuracy: (tp + tn) as f64 / n,
        precision: if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 },
        recall: if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 },
    }
}

/// Teacher reference for one case, solved in the current process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub throughput: f64,
    pub t_original: f64,
}

impl Reference {
    pub fn solve(inst: &NetworkInstance, opts: &ColgenOptions) -> Result<Self> {
        let start = Instant::now();
        let sol = run_colgen(inst, opts)?;
        Ok(Reference { throughput: sol.throughput, t_original: start.elapsed().as_secs_f64() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub kept_link_fraction: f64,
    pub approximation_ratio: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub throughput_original: f64,
    pub throughput_reduced: f64,
    pub backoff_links: usize,
    pub timing: TimingBreakdown,
}

/// Prunes, backs off, solves the reduced instance and scores the case.
/// `t_inference` is measured by the caller.
pub fn evaluate_case(
    inst: &NetworkInstance,
    labels: &[u8],
    scores: &[f64],
    reference: &Reference,
    cfg: &PruneConfig,
    t_inference: f64,
    opts: &ColgenOptions,
) -> Result<EvalResult> {
    if reference.throughput <= 0.0 {
        return Err(PipelineError::ZeroThroughput);
    }
    let pruned = prune(inst, scores, cfg)?;
    let start = Instant::now();
    let (mask, added) = backoff(inst, &pruned.mask, scores, cfg.backoff_step)?;
    let t_backoff = start.elapsed().as_secs_f64();
    let pruned = if added > 0 { PrunedInstance::from_mask(inst, mask) } else { pruned };
    assert!(all_routable(inst, &pruned.mask), "reduced instance must route every demand");

    let start = Instant::now();
    let reduced = run_colgen(&pruned.instance, opts)?;
    let t_reduced_instance = start.elapsed().as_secs_f64();

    let c = classify(scores, labels, cfg.alpha);
    Ok(EvalResult {
        kept_link_fraction: pruned.kept_fraction(),
        approximation_ratio: reduced.throughput / reference.throughput,
        accuracy: c.accuracy,
        precision: c.precision,
        recall: c.recall,
        throughput_original: reference.throughput,
        throughput_reduced: reduced.throughput,
        backoff_links: added,
        timing: TimingBreakdown { t_inference, t_reduced_instance, t_backoff, t_original: reference.t_original },
    })
}

/// One row of the per-case metrics file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseRow {
    pub case_id: usize,
    pub family: String,
    pub n_nodes: usize,
    pub n_links: usize,
    pub kept_fraction: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub approx_ratio: f64,
    pub t_inference: f64,
    pub t_reduced: f64,
    pub t_backoff: f64,
    pub t_original: f64,
}

impl CaseRow {
    pub fn new(case_id: usize, family: &str, inst: &NetworkInstance, r: &EvalResult) -> Self {
        CaseRow {
            case_id,
            family: family.to_string(),
            n_nodes: inst.node_count(),
            n_links: inst.link_count(),
            kept_fraction: r.kept_link_fraction,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            approx_ratio: r.approximation_ratio,
            t_inference: r.timing.t_inference,
            t_reduced: r.timing.t_reduced_instance,
            t_backoff: r.timing.t_backoff,
            t_original: r.timing.t_original,
        }
    }
}
