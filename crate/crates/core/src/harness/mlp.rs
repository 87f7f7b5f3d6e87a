use rand::seq::SliceRandom;

use super::{HarnessError, Result, TrainSettings};
use crate::autodiff::{Gradients, ParamStore, Tape, Tensor, Var};
use crate::colgen::LabeledRecord;
use crate::netgen::NetworkInstance;
use crate::par;
use crate::rng;
use crate::talf::compute_weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlpVariant {
    /// Pair-slot capacities and demand flags.
    Plain,
    /// Additionally the flattened adjacency matrix.
    Adjacency,
}

impl MlpVariant {
    pub fn label(self) -> &'static str {
        match self {
            MlpVariant::Plain => "MLP",
            MlpVariant::Adjacency => "MLP-ADJ",
        }
    }
}

/// Fixed-size perceptron baseline. Links are addressed by ordered node
/// pair, so one model serves a single node count.
#[derive(Clone, Debug)]
pub struct MlpModel {
    pub variant: MlpVariant,
    pub nodes: usize,
    pub hidden: usize,
    pub store: ParamStore,
}

fn slot(n: usize, u: usize, v: usize) -> usize {
    u * (n - 1) + if v > u { v - 1 } else { v }
}

impl MlpModel {
    pub fn input_dim(nodes: usize, variant: MlpVariant) -> usize {
        let base = nodes * (nodes - 1) + 2 * nodes;
        match variant {
            MlpVariant::Plain => base,
            MlpVariant::Adjacency => base + nodes * nodes,
        }
    }

    fn check(&self, inst: &NetworkInstance) -> Result<()> {
        if inst.node_count() != self.nodes {
            return Err(HarnessError::MixedSizes(self.nodes, inst.node_count()));
        }
        Ok(())
    }

    fn input(&self, inst: &NetworkInstance) -> Tensor {
        let n = self.nodes;
        let mut x = vec![0.0; Self::input_dim(n, self.variant)];
        let cmax = inst.max_capacity();
        for l in &inst.links {
            x[slot(n, l.src, l.dst)] = l.capacity / cmax;
        }
        let off = n * (n - 1);
        for d in &inst.demands {
            x[off + 2 * d.source] = 1.0;
            x[off + 2 * d.sink + 1] = 1.0;
        }
        if self.variant == MlpVariant::Adjacency {
            let off = off + 2 * n;
            for l in &inst.links {
                x[off + l.src * n + l.dst] = 1.0;
            }
        }
        let d = x.len();
        Tensor::from_vec(1, d, x)
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, inst: &NetworkInstance) -> Result<Var> {
        let mut h = tape.constant(self.input(inst))?;
        for k in 1..=3 {
            let w = tape.param(store, &format!("W{k}"))?;
            let b = tape.param(store, &format!("b{k}"))?;
            h = tape.matmul(h, w)?;
            h = tape.add_row(h, b)?;
            if k < 3 {
                h = tape.relu(h)?;
            }
        }
        let col = tape.transpose(h)?;
        let slots: Vec<usize> = inst.links.iter().map(|l| slot(self.nodes, l.src, l.dst)).collect();
        let picked = tape.row_select(col, &slots)?;
        Ok(tape.sigmoid(picked)?)
    }

    fn init(nodes: usize, hidden: usize, variant: MlpVariant, seed: u64) -> Result<Self> {
        let mut r = rng::from_seed(seed);
        let mut store = ParamStore::new();
        let dims = [Self::input_dim(nodes, variant), hidden, hidden, nodes * (nodes - 1)];
        for k in 1..=3 {
            store.insert_glorot(&format!("W{k}"), dims[k - 1], dims[k], &mut r)?;
            store.insert(&format!("b{k}"), Tensor::zeros(1, dims[k]))?;
        }
        Ok(MlpModel { variant, nodes, hidden, store })
    }

    /// Trains with the same loss, batching and optimiser as the main model.
    pub fn train(train: &[LabeledRecord], variant: MlpVariant, hidden: usize, s: &TrainSettings) -> Result<Self> {
        let insts: Vec<NetworkInstance> = train.iter().map(|r| r.instance()).collect::<std::result::Result<_, _>>()?;
        let nodes = insts.first().ok_or_else(|| HarnessError::Invalid("empty training shard".into()))?.node_count();
        if let Some(other) = insts.iter().find(|i| i.node_count() != nodes) {
            return Err(HarnessError::MixedSizes(nodes, other.node_count()));
        }
        let targets: Vec<(Vec<f64>, Vec<f64>)> = train
            .iter()
            .map(|r| {
                let y = r.labels.iter().map(|&v| f64::from(v)).collect();
                let w = if s.weighted { compute_weights(&r.normalized_flow())? } else { vec![1.0; r.labels.len()] };
                Ok((y, w))
            })
            .collect::<Result<_>>()?;
        let mut model = Self::init(nodes, hidden, variant, rng::derive(s.seed, 0x3C))?;
        let mut order: Vec<usize> = (0..insts.len()).collect();
        for epoch in 0..s.epochs {
            order.shuffle(&mut rng::from_seed(rng::derive(s.seed, 0x3C00 + epoch as u64)));
            for batch in order.chunks(s.batch_size.max(1)) {
                let links: usize = batch.iter().map(|&i| targets[i].0.len()).sum();
                let snapshot = &model;
                let grads = par::map(s.mode, batch, |&i| -> Result<Gradients> {
                    let mut t = Tape::new();
                    let y = snapshot.forward(&mut t, &snapshot.store, &insts[i])?;
                    let l = t.weighted_bce(y, &targets[i].0, &targets[i].1)?;
                    Ok(t.backward(l, &snapshot.store)?)
                });
                let mut total = Gradients::zeros_like(&model.store);
                for g in grads {
                    total.add_assign(&g?);
                }
                model.store.accumulate(&total, 1.0 / links as f64);
                if let Some(max) = s.clip_norm {
                    model.store.clip_grad_norm(max);
                }
                model.store.sgd_step(s.lr, s.momentum);
            }
            if !model.store.is_finite() {
                return Err(HarnessError::Diverged { epoch: epoch + 1, msg: "non-finite MLP parameters".into() });
            }
        }
        Ok(model)
    }

    pub fn predict(&self, inst: &NetworkInstance) -> Result<Vec<f64>> {
        self.check(inst)?;
        let mut t = Tape::new();
        let y = self.forward(&mut t, &self.store, inst)?;
        Ok(t.value(y).data.clone())
    }
}
