//! Topology-aware link scoring model.
//!
//! Links are embedded on the directed line graph with four neighbour
//! types, nodes on the normalised undirected support graph, demands by a
//! sum over `(source, sink)` pairs, and each link is scored by the inner
//! product of its projected embedding with the projected demand vector.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Gradients, ParamStore, SparseRows, Tape, Tensor, Var};
use crate::colgen::LabeledRecord;
use crate::netgen::NetworkInstance;
use crate::par::{self, ExecMode};
use crate::rng::{self, Rng};

#[derive(Debug, Error, PartialEq)]
pub enum TalfError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("normalized flow {0} outside [0, 1]")]
    FlowRange(f64),
    #[error("empty training shard")]
    EmptyShard,
    #[error("instance has no links")]
    NoLinks,
}

pub type Result<T> = std::result::Result<T, TalfError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TalfConfig {
    pub d_n_emb: usize,
    pub d_e_emb: usize,
    pub d_att: usize,
    pub rounds_e: usize,
    pub rounds_n: usize,
    pub dropout: f64,
    pub alpha: f64,
    /// Append the demand flags of both endpoints to each link's features.
    #[serde(default = "enabled")]
    pub endpoint_flags: bool,
}

fn enabled() -> bool {
    true
}

impl Default for TalfConfig {
    fn default() -> Self {
        TalfConfig {
            d_n_emb: 64,
            d_e_emb: 64,
            d_att: 64,
            rounds_e: 3,
            rounds_n: 3,
            dropout: 0.1,
            alpha: 0.5,
            endpoint_flags: true,
        }
    }
}

impl TalfConfig {
    /// Square model with the given width and number of rounds.
    pub fn with_dims(dim: usize, rounds: usize) -> Self {
        TalfConfig { d_n_emb: dim, d_e_emb: dim, d_att: dim, rounds_e: rounds, rounds_n: rounds, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_n_emb == 0 || self.d_e_emb == 0 || self.d_att == 0 {
            return Err(TalfError::Config("dims must be positive".into()));
        }
        if self.rounds_e == 0 || self.rounds_n == 0 {
            return Err(TalfError::Config("rounds must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TalfError::Config("dropout must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TalfError::Config("alpha must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Parameter names in insertion order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["edge_seed".to_string(), "node_seed".to_string()];
        for l in 0..self.rounds_e {
            names.push(format!("W_Es.{l}"));
            for i in 1..=4 {
                names.push(format!("W_En{i}.{l}"));
            }
        }
        for l in 0..self.rounds_n {
            names.push(format!("W_Ns.{l}"));
            names.push(format!("W_Nn.{l}"));
        }
        names.extend(["tau_w", "tau_b", "W_q", "W_V"].map(String::from));
        names
    }
}

impl TalfConfig {
    /// Normalised capacity, optionally followed by the source/sink flags
    /// of the link's tail and head.
    pub fn edge_features(&self) -> usize {
        if self.endpoint_flags {
            1 + 2 * NODE_FEATURES
        } else {
            1
        }
    }
}
/// Node features per node: source and sink flags.
pub const NODE_FEATURES: usize = 2;

/// Glorot-initialised parameters (the bias starts at zero).
pub fn init_params(cfg: &TalfConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = rng::from_seed(seed);
    let mut s = ParamStore::new();
    let (de, dn) = (cfg.d_e_emb, cfg.d_n_emb);
    s.insert_glorot("edge_seed", 1, de, &mut rng)?;
    s.insert_glorot("node_seed", 1, dn, &mut rng)?;
    for l in 0..cfg.rounds_e {
        let fan_in = if l == 0 { de + cfg.edge_features() } else { de };
        s.insert_glorot(&format!("W_Es.{l}"), fan_in, de, &mut rng)?;
        for i in 1..=4 {
            s.insert_glorot(&format!("W_En{i}.{l}"), fan_in, de, &mut rng)?;
        }
    }
    for l in 0..cfg.rounds_n {
        let fan_in = if l == 0 { dn + NODE_FEATURES } else { dn };
        s.insert_glorot(&format!("W_Ns.{l}"), fan_in, dn, &mut rng)?;
        s.insert_glorot(&format!("W_Nn.{l}"), fan_in, dn, &mut rng)?;
    }
    s.insert_glorot("tau_w", 2 * dn, dn, &mut rng)?;
    s.insert("tau_b", Tensor::zeros(1, dn))?;
    s.insert_glorot("W_q", dn, cfg.d_att, &mut rng)?;
    s.insert_glorot("W_V", de, cfg.d_att, &mut rng)?;
    Ok(s)
}

/// Typed neighbour lists of the directed line graph plus the normalised
/// node adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct LineGraph {
    /// `neighbors[t][e]` lists links of type `t + 1` around link `e`:
    /// entering its source, entering its destination, leaving its source,
    /// leaving its destination.
    pub neighbors: [Vec<Vec<usize>>; 4],
    pub mean_ops: [Arc<SparseRows>; 4],
    pub node_adj: Arc<SparseRows>,
}

pub fn build_line_graph(inst: &NetworkInstance) -> LineGraph {
    let n = inst.node_count();
    let m = inst.link_count();
    let mut into = vec![Vec::new(); n];
    let mut out = vec![Vec::new(); n];
    for (e, l) in inst.links.iter().enumerate() {
        out[l.src].push(e);
        into[l.dst].push(e);
    }
    let mut neighbors: [Vec<Vec<usize>>; 4] = Default::default();
    for l in &inst.links {
        let (u, v) = (l.src, l.dst);
        neighbors[0].push(into[u].clone());
        neighbors[1].push(into[v].iter().copied().filter(|&f| inst.links[f].src != u).collect());
        neighbors[2].push(out[u].iter().copied().filter(|&f| inst.links[f].dst != v).collect());
        neighbors[3].push(out[v].clone());
    }
    let mean_ops = std::array::from_fn(|t| Arc::new(SparseRows::mean_of(&neighbors[t], m)));

    let mut adj = vec![Vec::<usize>::new(); n];
    for l in &inst.links {
        for (a, b) in [(l.src, l.dst), (l.dst, l.src)] {
            if !adj[a].contains(&b) {
                adj[a].push(b);
            }
        }
    }
    for row in &mut adj {
        row.sort_unstable();
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.len() as f64).collect();
    let rows = adj
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt())).collect())
        .collect();
    LineGraph { neighbors, mean_ops, node_adj: Arc::new(SparseRows { rows, in_rows: n }) }
}

/// Model inputs derived from one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEncoding {
    pub edge: Tensor,
    pub node: Tensor,
    pub demand_sources: Vec<usize>,
    pub demand_sinks: Vec<usize>,
}

pub fn encode_features(inst: &NetworkInstance, endpoint_flags: bool) -> Result<FeatureEncoding> {
    if inst.links.is_empty() {
        return Err(TalfError::NoLinks);
    }
    let mut node = Tensor::zeros(inst.node_count(), NODE_FEATURES);
    for d in &inst.demands {
        node.data[d.source * NODE_FEATURES] = 1.0;
        node.data[d.sink * NODE_FEATURES + 1] = 1.0;
    }
    let cmax = inst.max_capacity();
    let width = if endpoint_flags { 1 + 2 * NODE_FEATURES } else { 1 };
    let mut edge = Vec::with_capacity(inst.link_count() * width);
    for l in &inst.links {
        edge.push(l.capacity / cmax);
        if endpoint_flags {
            edge.extend_from_slice(node.row(l.src));
            edge.extend_from_slice(node.row(l.dst));
        }
    }
    let edge = Tensor::from_vec(inst.link_count(), width, edge);
    Ok(FeatureEncoding {
        edge,
        node,
        demand_sources: inst.demands.iter().map(|d| d.source).collect(),
        demand_sinks: inst.demands.iter().map(|d| d.sink).collect(),
    })
}

/// Everything the forward pass needs about one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub graph: LineGraph,
    pub features: FeatureEncoding,
}

impl Prepared {
    pub fn new(inst: &NetworkInstance, cfg: &TalfConfig) -> Result<Self> {
        Ok(Prepared { graph: build_line_graph(inst), features: encode_features(inst, cfg.endpoint_flags)? })
    }

    pub fn link_count(&self) -> usize {
        self.features.edge.rows
    }

    pub fn node_count(&self) -> usize {
        self.features.node.rows
    }
}

/// Records the forward pass on `tape` and returns the `|E| x 1` scores.
pub fn forward(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &TalfConfig,
    prep: &Prepared,
    train: bool,
    rng: &mut Rng,
) -> Result<Var> {
    let p = cfg.dropout;
    let m = prep.link_count();
    let n = prep.node_count();

    let seed = tape.param(store, "edge_seed")?;
    let seeds = tape.row_select(seed, &vec![0; m])?;
    let feats = tape.constant(prep.features.edge.clone())?;
    let mut h_e = tape.concat_cols(&[seeds, feats])?;
    for l in 0..cfg.rounds_e {
        let ws = tape.param(store, &format!("W_Es.{l}"))?;
        let mut acc = tape.matmul(h_e, ws)?;
        for (i, op) in prep.graph.mean_ops.iter().enumerate() {
            let agg = tape.mix(h_e, op)?;
            let w = tape.param(store, &format!("W_En{}.{l}", i + 1))?;
            let msg = tape.matmul(agg, w)?;
            let msg = tape.relu(msg)?;
            acc = tape.add(acc, msg)?;
        }
        h_e = tape.relu(acc)?;
        h_e = tape.dropout(h_e, p, train, rng)?;
    }

    let seed = tape.param(store, "node_seed")?;
    let seeds = tape.row_select(seed, &vec![0; n])?;
    let feats = tape.constant(prep.features.node.clone())?;
    let mut h_n = tape.concat_cols(&[seeds, feats])?;
    for l in 0..cfg.rounds_n {
        let ws = tape.param(store, &format!("W_Ns.{l}"))?;
        let wn = tape.param(store, &format!("W_Nn.{l}"))?;
        let own = tape.matmul(h_n, ws)?;
        let agg = tape.mix(h_n, &prep.graph.node_adj)?;
        let msg = tape.matmul(agg, wn)?;
        let msg = tape.relu(msg)?;
        let sum = tape.add(own, msg)?;
        h_n = tape.relu(sum)?;
        h_n = tape.dropout(h_n, p, train, rng)?;
    }

    let src = tape.row_select(h_n, &prep.features.demand_sources)?;
    let dst = tape.row_select(h_n, &prep.features.demand_sinks)?;
    let pairs = tape.concat_cols(&[src, dst])?;
    let tw = tape.param(store, "tau_w")?;
    let tb = tape.param(store, "tau_b")?;
    let enc = tape.matmul(pairs, tw)?;
    let enc = tape.add_row(enc, tb)?;
    let enc = tape.relu(enc)?;
    let q = tape.sum_rows(enc)?;

    let wq = tape.param(store, "W_q")?;
    let wv = tape.param(store, "W_V")?;
    let key = tape.matmul(q, wq)?;
    let key = tape.transpose(key)?;
    let val = tape.matmul(h_e, wv)?;
    let logits = tape.matmul(val, key)?;
    let logits = tape.scalar_mul(logits, 1.0 / (cfg.d_att as f64).sqrt())?;
    Ok(tape.sigmoid(logits)?)
}

/// Inference scores aligned with the instance's link order.
pub fn predict(store: &ParamStore, cfg: &TalfConfig, prep: &Prepared) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let mut rng = rng::from_seed(0);
    let y = forward(&mut tape, store, cfg, prep, false, &mut rng)?;
    Ok(tape.value(y).data.clone())
}

/// Clamped weighted binary cross-entropy summed over links.
pub fn loss(yhat: &[f64], labels: &[f64], weights: &[f64]) -> Result<f64> {
    if yhat.len() != labels.len() || labels.len() != weights.len() {
        return Err(TalfError::Length(yhat.len(), labels.len()));
    }
    Ok(crate::autodiff::weighted_bce_value(yhat, labels, weights))
}

/// `w[e] = 1 + 10 * normalized_flow[e]`.
pub fn compute_weights(normalized_flow: &[f64]) -> Result<Vec<f64>> {
    normalized_flow
        .iter()
        .map(|&f| if (0.0..=1.0).contains(&f) { Ok(1.0 + 10.0 * f) } else { Err(TalfError::FlowRange(f)) })
        .collect()
}

/// One supervised example.
#[derive(Clone, Debug)]
pub struct TrainCase {
    pub prep: Prepared,
    pub labels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TrainCase {
    pub fn from_record(rec: &LabeledRecord, cfg: &TalfConfig, weighted: bool) -> Result<Self> {
        let inst = rec.instance().map_err(|e| TalfError::Config(e.to_string()))?;
        let prep = Prepared::new(&inst, cfg)?;
        let nf = rec.normalized_flow();
        let weights = if weighted { compute_weights(&nf)? } else { vec![1.0; nf.len()] };
        let labels: Vec<f64> = rec.labels.iter().map(|&y| f64::from(y)).collect();
        if labels.len() != prep.link_count() {
            return Err(TalfError::Length(labels.len(), prep.link_count()));
        }
        Ok(TrainCase { prep, labels, weights })
    }
}

/// Loss value and parameter gradients of one case.
pub fn case_gradient(
    store: &ParamStore,
    cfg: &TalfConfig,
    case: &TrainCase,
    train: bool,
    rng: &mut Rng,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let y = forward(&mut tape, store, cfg, &case.prep, train, rng)?;
    let l = tape.weighted_bce(y, &case.labels, &case.weights)?;
    let g = tape.backward(l, store)?;
    Ok((tape.value(l).data[0], g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Global gradient-norm cap applied before each step.
    pub clip_norm: Option<f64>,
    pub mode: ExecMode,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lr: 0.05, momentum: 0.9, batch_size: 16, clip_norm: Some(1.0), mode: ExecMode::default() }
    }
}

/// One shuffled pass over `cases`. Each batch's loss is the summed case
/// loss divided by the batch's link count; returns the link-weighted mean
/// training loss.
pub fn train_epoch(
    store: &mut ParamStore,
    cfg: &TalfConfig,
    cases: &[TrainCase],
    opts: &TrainOptions,
    seed: u64,
) -> Result<f64> {
    if cases.is_empty() {
        return Err(TalfError::EmptyShard);
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.shuffle(&mut rng::from_seed(seed));
    let (mut total_loss, mut total_links) = (0.0, 0usize);
    for (b, batch) in order.chunks(opts.batch_size.max(1)).enumerate() {
        let links: usize = batch.iter().map(|&i| cases[i].labels.len()).sum();
        let snapshot: &ParamStore = store;
        let items: Vec<(usize, usize)> = batch.iter().copied().enumerate().collect();
        let results = par::map(opts.mode, &items, |&(k, i)| {
            let mut r = rng::from_seed(rng::derive(rng::derive(seed, b as u64), k as u64));
            case_gradient(snapshot, cfg, &cases[i], true, &mut r)
        });
        let mut grads = Gradients::zeros_like(store);
        for r in results {
            let (l, g) = r?;
            total_loss += l;
            grads.add_assign(&g);
        }
        total_links += links;
        store.accumulate(&grads, 1.0 / links as f64);
        if let Some(max) = opts.clip_norm {
            let n = store.clip_grad_norm(max);
            log::trace!("batch {b}: grad norm {n:.4}");
        }
        store.sgd_step(opts.lr, opts.momentum);
        if !store.is_finite() {
            return Err(AutodiffError::NonFinite("sgd_step").into());
        }
    }
    Ok(total_loss / total_links as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::netgen::{generate, Demand, Family, GeneratorConfig};

    fn pair_instance() -> NetworkInstance {
        NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0)], 1.0, 1.5, &[(0, 1)])
    }

    #[test]
    fn line_graph_rules() {
        let inst = NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 1.0, 1.5, &[(0, 2)]);
        let lg = build_line_graph(&inst);
        let a = inst.link_index(0, 1).unwrap();
        let b = inst.link_index(1, 2).unwrap();
        assert!(lg.neighbors[3][a].contains(&b));
        assert!(lg.neighbors[0][b].contains(&a));
        for e in 0..inst.link_count() {
            let mut union: Vec<usize> = lg.neighbors.iter().flat_map(|t| t[e].iter().copied()).collect();
            union.sort_unstable();
            union.dedup();
            assert!(!union.contains(&e));
            let le = inst.links[e];
            let expect: Vec<usize> = (0..inst.link_count())
                .filter(|&f| {
                    let lf = inst.links[f];
                    f != e && [lf.src, lf.dst].iter().any(|x| *x == le.src || *x == le.dst)
                })
                .collect();
            assert_eq!(union, expect);
        }
    }

    #[test]
    fn reverse_link_in_two_types() {
        let inst = pair_instance();
        let lg = build_line_graph(&inst);
        let a = inst.link_index(0, 1).unwrap();
        let rev = inst.link_index(1, 0).unwrap();
        assert_eq!(lg.neighbors[0][a], vec![rev]);
        assert_eq!(lg.neighbors[3][a], vec![rev]);
        assert!(lg.neighbors[1][a].is_empty() && lg.neighbors[2][a].is_empty());
    }

    #[test]
    fn isolated_link_has_empty_lists() {
        let inst = NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0), (5.0, 0.0), (6.0, 0.0)], 1.0, 1.5, &[(0, 1)]);
        let lg = build_line_graph(&inst);
        let mut single = inst.clone();
        single.links.truncate(1);
        let lg1 = build_line_graph(&single);
        assert!(lg1.neighbors.iter().all(|t| t[0].is_empty()));
        assert_eq!(lg.neighbors[0].len(), 4);
    }

    #[test]
    fn zero_params_give_half() {
        let inst = NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 1.0, 1.5, &[(0, 2)]);
        let cfg = TalfConfig::with_dims(4, 2);
        let mut s = init_params(&cfg, 1).unwrap();
        for p in s.params_mut() {
            p.value.data.iter_mut().for_each(|x| *x = 0.0);
        }
        let y = predict(&s, &cfg, &Prepared::new(&inst, &cfg).unwrap()).unwrap();
        assert!(y.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn weights_and_loss_examples() {
        assert_eq!(compute_weights(&[0.0, 1.0, 0.5]).unwrap(), vec![1.0, 11.0, 6.0]);
        assert!((compute_weights(&[0.35]).unwrap()[0] - 4.5).abs() < 1e-12);
        assert!(compute_weights(&[1.5]).is_err());
        assert!((loss(&[0.5], &[1.0], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(loss(&[0.5], &[1.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn duplicate_demand_changes_scores() {
        let mut inst = NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.5, 0.8)], 1.0, 1.5, &[(0, 2)]);
        let cfg = TalfConfig::with_dims(6, 2);
        let s = init_params(&cfg, 3).unwrap();
        let a = predict(&s, &cfg, &Prepared::new(&inst, &cfg).unwrap()).unwrap();
        inst.demands.push(Demand { source: 0, sink: 2 });
        let b = predict(&s, &cfg, &Prepared::new(&inst, &cfg).unwrap()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn scores_are_strictly_inside_unit_interval_and_size_transfers() {
        let cfg = TalfConfig::with_dims(8, 2);
        let s = init_params(&cfg, 5).unwrap();
        for n in [16, 50] {
            let inst = generate(&GeneratorConfig::desk(Family::RandomGeometric, n), 1).unwrap();
            let y = predict(&s, &cfg, &Prepared::new(&inst, &cfg).unwrap()).unwrap();
            assert_eq!(y.len(), inst.link_count());
            assert!(y.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn endpoint_flags_widen_link_features() {
        let inst = NetworkInstance::from_positions(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 1.0, 1.5, &[(0, 2)]);
        let plain = encode_features(&inst, false).unwrap();
        assert_eq!(plain.edge.shape(), (inst.link_count(), 1));
        let f = encode_features(&inst, true).unwrap();
        let e = inst.link_index(0, 1).unwrap();
        assert_eq!(f.edge.row(e)[1..], [1.0, 0.0, 0.0, 0.0]);
        let e = inst.link_index(1, 2).unwrap();
        assert_eq!(f.edge.row(e)[1..], [0.0, 0.0, 0.0, 1.0]);
        let off = TalfConfig { endpoint_flags: false, ..TalfConfig::with_dims(4, 1) };
        assert_eq!(init_params(&off, 0).unwrap().get("W_Es.0").unwrap().rows, 4 + 1);
    }

    #[test]
    fn full_forward_gradcheck() {
        for flags in [true, false] {
            forward_gradcheck(flags);
        }
    }

    fn forward_gradcheck(endpoint_flags: bool) {
        let inst = generate(&GeneratorConfig { demand_count: 2, ..GeneratorConfig::desk(Family::RandomGeometric, 5) }, 2)
            .unwrap();
        let cfg = TalfConfig { dropout: 0.0, endpoint_flags, ..TalfConfig::with_dims(8, 3) };
        let s = init_params(&cfg, 0).unwrap();
        let prep = Prepared::new(&inst, &cfg).unwrap();
        let labels: Vec<f64> = (0..inst.link_count()).map(|e| (e % 3 == 0) as u8 as f64).collect();
        let weights: Vec<f64> = (0..inst.link_count()).map(|e| 1.0 + (e % 4) as f64).collect();
        let err = grad_check(&s, 1e-5, 100, 1, |t, s| {
            let mut r = rng::from_seed(0);
            let y = forward(t, s, &cfg, &prep, false, &mut r).map_err(|e| match e {
                TalfError::Autodiff(a) => a,
                other => AutodiffError::Checkpoint(other.to_string()),
            })?;
            t.weighted_bce(y, &labels, &weights)
        })
        .unwrap();
        assert!(err <= 1e-4, "max rel err {err}");
    }

    #[test]
    fn lr_zero_keeps_params_and_epochs_are_deterministic() {
        let cfg = TalfConfig::with_dims(6, 2);
        let insts: Vec<NetworkInstance> =
            (0..4).map(|s| generate(&GeneratorConfig::desk(Family::Grid, 9), s).unwrap()).collect();
        let cases: Vec<TrainCase> = insts
            .iter()
            .map(|i| TrainCase {
                prep: Prepared::new(i, &cfg).unwrap(),
                labels: (0..i.link_count()).map(|e| (e % 2) as f64).collect(),
                weights: vec![1.0; i.link_count()],
            })
            .collect();
        let s0 = init_params(&cfg, 1).unwrap();
        let mut s = s0.clone();
        let opts = TrainOptions { lr: 0.0, batch_size: 1, ..TrainOptions::default() };
        let l = train_epoch(&mut s, &cfg, &cases, &opts, 3).unwrap();
        assert!(l > 0.0);
        for (a, b) in s.params().iter().zip(s0.params()) {
            assert_eq!(a.value, b.value);
        }
        let run = |mode| {
            let mut s = s0.clone();
            let opts = TrainOptions { lr: 0.05, batch_size: 2, mode, ..TrainOptions::default() };
            (0..2).map(|e| train_epoch(&mut s, &cfg, &cases, &opts, e).unwrap().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(ExecMode::Parallel), run(ExecMode::Parallel));
        assert_eq!(run(ExecMode::Parallel), run(ExecMode::Sequential));
    }

    #[test]
    fn invalid_configs() {
        assert!(TalfConfig { rounds_e: 0, ..TalfConfig::default() }.validate().is_err());
        assert!(TalfConfig { d_att: 0, ..TalfConfig::default() }.validate().is_err());
        assert!(TalfConfig { dropout: 1.0, ..TalfConfig::default() }.validate().is_err());
        assert_eq!(init_params(&TalfConfig::default(), 0).unwrap().len(), TalfConfig::default().param_names().len());
    }
}
