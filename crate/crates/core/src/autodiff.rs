//! Minimal tape-based reverse-mode automatic differentiation over dense
//! row-major matrices.
//!
//! A [`Tape`] records every primitive in execution order together with the
//! values its backward rule needs; [`Tape::backward`] walks the records in
//! exact reverse. Trainable matrices live in a [`ParamStore`] and enter a
//! tape through [`Tape::param`].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{reals, unreal, Real};
use crate::rng::{self, Rng};

/// Probability clamp inside the binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("index {index} out of range for {rows} rows")]
    Index { index: usize, rows: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Tensor { rows, cols, data }
    }

    pub fn column(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_vec(n, 1, data)
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_vec(1, 1, vec![x])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(self)
        } else {
            Err(AutodiffError::NonFinite(op))
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self * other`
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a != 0.0 {
                    let brow = &other.data[p * m..(p + 1) * m];
                    for (o, b) in orow.iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            }
        }
        Tensor::from_vec(n, m, out)
    }

    /// `self^T * other`
    fn t_matmul(&self, other: &Tensor) -> Tensor {
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let brow = &other.data[p * m..(p + 1) * m];
            for i in 0..n {
                let a = self.data[p * n + i];
                if a != 0.0 {
                    let orow = &mut out[i * m..(i + 1) * m];
                    for (o, b) in orow.iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            }
        }
        Tensor::from_vec(n, m, out)
    }

    /// `self * other^T`
    fn matmul_t(&self, other: &Tensor) -> Tensor {
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &other.data[j * k..(j + 1) * k];
                out[i * m + j] = arow.iter().zip(brow).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::from_vec(n, m, out)
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor::from_vec(self.cols, self.rows, out)
    }
}

/// Constant sparse row-mixing operator: output row `i` is
/// `sum_(j, w) in rows[i]  w * input[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub in_rows: usize,
}

impl SparseRows {
    /// Mean over each neighbour list; empty lists give a zero row.
    pub fn mean_of(lists: &[Vec<usize>], in_rows: usize) -> Self {
        let rows = lists
            .iter()
            .map(|l| {
                let w = 1.0 / l.len().max(1) as f64;
                l.iter().map(|&j| (j, w)).collect()
            })
            .collect();
        SparseRows { rows, in_rows }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let c = x.cols;
        let mut out = vec![0.0; self.rows.len() * c];
        for (i, row) in self.rows.iter().enumerate() {
            let o = &mut out[i * c..(i + 1) * c];
            for &(j, w) in row {
                for (a, b) in o.iter_mut().zip(x.row(j)) {
                    *a += w * b;
                }
            }
        }
        Tensor::from_vec(self.rows.len(), c, out)
    }

    fn apply_transpose(&self, g: &Tensor) -> Tensor {
        let c = g.cols;
        let mut out = vec![0.0; self.in_rows * c];
        for (i, row) in self.rows.iter().enumerate() {
            let gi = g.row(i);
            for &(j, w) in row {
                for (a, b) in out[j * c..(j + 1) * c].iter_mut().zip(gi) {
                    *a += w * b;
                }
            }
        }
        Tensor::from_vec(self.in_rows, c, out)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    ScalarMul(Var, f64),
    ConcatCols(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    RowSelect(Var, Vec<usize>),
    SumRows(Var),
    MeanRows(Var),
    Transpose(Var),
    Mix(Var, Arc<SparseRows>),
    Dropout(Var, Vec<f64>),
    WeightedBce { yhat: Var, targets: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, aligned with [`ParamStore`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients(store.params.iter().map(|p| Tensor::zeros(p.value.rows, p.value.cols)).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }
}

/// Ordered record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        let value = value.check_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, "constant")
    }

    /// Trainable parameter from `store`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let idx = store.index(name)?;
        self.push(store.params[idx].value.clone(), Op::Param(idx), "param")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(AutodiffError::Shape { op: "matmul", lhs: sa, rhs: sb });
        }
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::Shape { op: "add", lhs: sa, rhs: sb });
        }
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b), "add")
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(AutodiffError::Shape { op: "add_row", lhs: sa, rhs: sb });
        }
        let mut v = self.value(a).clone();
        let b = self.value(bias).data.clone();
        for row in v.data.chunks_exact_mut(sa.1.max(1)) {
            for (x, y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias), "add_row")
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Result<Var> {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= s);
        self.push(v, Op::ScalarMul(a, s), "scalar_mul")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(AutodiffError::Shape { op: "concat_cols", lhs: self.shape(parts[0]), rhs: self.shape(p) });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = sigmoid(*x));
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    /// Gathers rows of `a` (indices may repeat).
    pub fn row_select(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let src = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.rows) {
            return Err(AutodiffError::Index { index: bad, rows: src.rows });
        }
        let mut data = Vec::with_capacity(idx.len() * src.cols);
        for &i in idx {
            data.extend_from_slice(src.row(i));
        }
        let v = Tensor::from_vec(idx.len(), src.cols, data);
        self.push(v, Op::RowSelect(a, idx.to_vec()), "row_select")
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let mut out = vec![0.0; src.cols];
        for r in 0..src.rows {
            for (o, x) in out.iter_mut().zip(src.row(r)) {
                *o += x;
            }
        }
        let v = Tensor::from_vec(1, src.cols, out);
        self.push(v, Op::SumRows(a), "sum_rows")
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let rows = self.shape(a).0.max(1) as f64;
        let s = self.sum_rows(a)?;
        // record as its own primitive so the backward rule is explicit
        let mut v = self.nodes.pop().expect("sum_rows node").value;
        debug_assert_eq!(s.0, self.nodes.len());
        v.data.iter_mut().for_each(|x| *x /= rows);
        self.push(v, Op::MeanRows(a), "mean_rows")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), "transpose")
    }

    /// Applies a constant sparse row mix (neighbour aggregation).
    pub fn mix(&mut self, a: Var, m: &Arc<SparseRows>) -> Result<Var> {
        if m.in_rows != self.shape(a).0 {
            return Err(AutodiffError::Shape { op: "mix", lhs: (m.rows.len(), m.in_rows), rhs: self.shape(a) });
        }
        let v = m.apply(self.value(a));
        self.push(v, Op::Mix(a, Arc::clone(m)), "mix")
    }

    /// Mean of the rows listed in each neighbourhood; empty gives zeros.
    pub fn masked_neighbor_mean(&mut self, a: Var, lists: &[Vec<usize>]) -> Result<Var> {
        let m = Arc::new(SparseRows::mean_of(lists, self.shape(a).0));
        self.mix(a, &m)
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales
    /// the rest; identity when `train` is false.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, rng: &mut Rng) -> Result<Var> {
        if !train || p <= 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> =
            (0..self.value(a).data.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let mut v = self.value(a).clone();
        v.data.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
        self.push(v, Op::Dropout(a, mask), "dropout")
    }

    /// `-sum_i w_i (y_i ln yhat_i + (1 - y_i) ln(1 - yhat_i))` with `yhat`
    /// clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn weighted_bce(&mut self, yhat: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        let p = self.value(yhat);
        if p.data.len() != targets.len() || targets.len() != weights.len() {
            return Err(AutodiffError::Shape { op: "weighted_bce", lhs: p.shape(), rhs: (targets.len(), weights.len()) });
        }
        let loss = weighted_bce_value(&p.data, targets, weights);
        self.push(
            Tensor::scalar(loss),
            Op::WeightedBce { yhat, targets: targets.to_vec(), weights: weights.to_vec() },
            "weighted_bce",
        )
    }

    /// Reverse sweep from a scalar `loss`; returns parameter gradients.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let s = self.shape(loss);
        if s != (1, 1) {
            return Err(AutodiffError::NotScalar(s));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(store);

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(k) => out.0[*k].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_t(vb));
                    acc(&mut grads, *b, va.t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, b) => {
                    let mut gb = vec![0.0; g.cols];
                    for r in 0..g.rows {
                        for (o, x) in gb.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    let cols = g.cols;
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, Tensor::from_vec(1, cols, gb));
                }
                Op::ScalarMul(a, s) => {
                    let mut g = g;
                    g.data.iter_mut().for_each(|x| *x *= s);
                    acc(&mut grads, *a, g);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.shape(*p);
                        let mut d = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        acc(&mut grads, *p, Tensor::from_vec(rows, cols, d));
                        offset += cols;
                    }
                }
                Op::Relu(a) => {
                    // subgradient 0 at exactly 0
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&node.value.data) {
                        if *y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Sigmoid(a) => {
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&node.value.data) {
                        *x *= y * (1.0 - y);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::RowSelect(a, idx) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = vec![0.0; rows * cols];
                    for (k, &r) in idx.iter().enumerate() {
                        for (o, x) in d[r * cols..(r + 1) * cols].iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, Tensor::from_vec(rows, cols, d));
                }
                Op::SumRows(a) | Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let scale = if matches!(node.op, Op::MeanRows(_)) { 1.0 / rows.max(1) as f64 } else { 1.0 };
                    let mut d = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        d.extend(g.data.iter().map(|x| x * scale));
                    }
                    acc(&mut grads, *a, Tensor::from_vec(rows, cols, d));
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Mix(a, m) => acc(&mut grads, *a, m.apply_transpose(&g)),
                Op::Dropout(a, mask) => {
                    let mut g = g;
                    g.data.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
                    acc(&mut grads, *a, g);
                }
                Op::WeightedBce { yhat, targets, weights } => {
                    let up = g.data[0];
                    let p = self.value(*yhat);
                    let d = p
                        .data
                        .iter()
                        .zip(targets)
                        .zip(weights)
                        .map(|((&q, &y), &w)| {
                            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&q) {
                                0.0
                            } else {
                                -up * w * (y / q - (1.0 - y) / (1.0 - q))
                            }
                        })
                        .collect();
                    acc(&mut grads, *yhat, Tensor::from_vec(p.rows, p.cols, d));
                }
            }
        }
        for g in &out.0 {
            if g.data.iter().any(|x| !x.is_finite()) {
                return Err(AutodiffError::NonFinite("backward"));
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward value of the clamped weighted binary cross-entropy.
pub fn weighted_bce_value(yhat: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    yhat.iter()
        .zip(targets)
        .zip(weights)
        .map(|((&q, &y), &w)| {
            let q = q.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -w * (y * q.ln() + (1.0 - y) * (1.0 - q).ln())
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

/// Named trainable matrices with gradient and momentum slots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        let (r, c) = value.shape();
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(r, c),
            velocity: Tensor::zeros(r, c),
        });
        Ok(())
    }

    /// Glorot-uniform initialised `rows x cols` parameter.
    pub fn insert_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> Result<()> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
        self.insert(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.params[self.index(name)?].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = self.index(name)?;
        Ok(&mut self.params[i].value)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn accumulate(&mut self, g: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&g.0) {
            for (a, b) in p.grad.data.iter_mut().zip(&g.data) {
                *a += scale * b;
            }
        }
    }

    /// Rescales the accumulated gradient to global L2 norm at most `max`;
    /// returns the norm before rescaling.
    pub fn clip_grad_norm(&mut self, max: f64) -> f64 {
        let norm = self.params.iter().flat_map(|p| &p.grad.data).map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            let k = max / norm;
            for p in &mut self.params {
                p.grad.data.iter_mut().for_each(|g| *g *= k);
            }
        }
        norm
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Momentum SGD: `v <- momentum * v + g; p <- p - lr * v`, then zero grads.
    pub fn sgd_step(&mut self, lr: f64, momentum: f64) {
        for p in &mut self.params {
            for ((x, v), g) in p.value.data.iter_mut().zip(&mut p.velocity.data).zip(&p.grad.data) {
                *v = momentum * *v + g;
                *x -= lr * *v;
            }
        }
        self.zero_grad();
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.data.iter().all(|x| x.is_finite()))
    }

    pub fn to_checkpoint(&self) -> BTreeMap<String, ParamRecord> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), ParamRecord { shape: [p.value.rows, p.value.cols], data: reals(&p.value.data) }))
            .collect()
    }

    /// Rebuilds a store; parameters are inserted in `order`.
    pub fn from_checkpoint(map: &BTreeMap<String, ParamRecord>, order: &[String]) -> Result<Self> {
        let mut s = ParamStore::new();
        for name in order {
            let r = map.get(name).ok_or_else(|| AutodiffError::Checkpoint(format!("missing parameter '{name}'")))?;
            if r.data.len() != r.shape[0] * r.shape[1] {
                return Err(AutodiffError::Checkpoint(format!("parameter '{name}' data/shape mismatch")));
            }
            s.insert(name, Tensor::from_vec(r.shape[0], r.shape[1], unreal(&r.data)))?;
        }
        if map.len() != order.len() {
            return Err(AutodiffError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamRecord {
    pub shape: [usize; 2],
    pub data: Vec<Real>,
}

/// Compares reverse-mode gradients of `loss_fn` with central differences
/// on up to `samples` coordinates per parameter; returns the largest
/// `|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
pub fn grad_check<F>(store: &ParamStore, eps: f64, samples: usize, seed: u64, loss_fn: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    let analytic = tape.backward(loss, store)?;
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = loss_fn(&mut t, s)?;
        Ok(t.value(l).data[0])
    };
    let mut rng = rng::from_seed(seed);
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for (k, p) in store.params.iter().enumerate() {
        let n = p.value.data.len();
        let coords: Vec<usize> =
            if n <= samples { (0..n).collect() } else { (0..samples).map(|_| rng.random_range(0..n)).collect() };
        for c in coords {
            let orig = p.value.data[c];
            probe.params[k].value.data[c] = orig + eps;
            let up = eval(&probe)?;
            probe.params[k].value.data[c] = orig - eps;
            let down = eval(&probe)?;
            probe.params[k].value.data[c] = orig;
            let fd = (up - down) / (2.0 * eps);
            let ad = analytic.0[k].data[c];
            worst = worst.max((ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
        let mut rng = rng::from_seed(seed);
        let mut s = ParamStore::new();
        for &(n, r, c) in shapes {
            s.insert_glorot(n, r, c, &mut rng).unwrap();
        }
        s
    }

    fn random_tensor(r: usize, c: usize, rng: &mut Rng) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::from_vec(1, 3, vec![-1.0, 0.0, 2.0])).unwrap();
        let mut t = Tape::new();
        let x = t.param(&s, "x").unwrap();
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y).data, vec![0.0, 0.0, 2.0]);
        let sum = t.sum_rows(y).unwrap();
        let ones = t.constant(Tensor::from_vec(3, 1, vec![1.0; 3])).unwrap();
        let l = t.matmul(sum, ones).unwrap();
        let g = t.backward(l, &s).unwrap();
        assert_eq!(g.0[0].data, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn bce_known_value() {
        assert!((weighted_bce_value(&[0.5], &[1.0], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((weighted_bce_value(&[0.5], &[1.0], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(weighted_bce_value(&[1.0 - BCE_CLAMP], &[1.0], &[1.0]) < 1e-6);
        assert!(weighted_bce_value(&[0.0], &[0.0], &[3.0]) < 1e-6);
        assert!(weighted_bce_value(&[0.0], &[1.0], &[1.0]).is_finite());
    }

    #[test]
    fn empty_neighbourhood_gives_zero_row() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let m = t.masked_neighbor_mean(x, &[vec![], vec![0, 1]]).unwrap();
        assert_eq!(t.value(m).data, vec![0.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        // loss = sum(W x) for fixed x => dL/dW[i][j] = x[j]
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6])).unwrap();
        let x = Tensor::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let mut t = Tape::new();
        let w = t.param(&s, "w").unwrap();
        let xv = t.constant(x).unwrap();
        let y = t.matmul(w, xv).unwrap();
        let yt = t.transpose(y).unwrap();
        let ones = t.constant(Tensor::column(vec![1.0, 1.0])).unwrap();
        let l = t.matmul(yt, ones).unwrap();
        let g = t.backward(l, &s).unwrap();
        assert_eq!(g.0[0].data, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn unreached_params_get_zero_grad_and_non_scalar_rejected() {
        let s = store_with(&[("a", 2, 2), ("b", 2, 2)], 1);
        let mut t = Tape::new();
        let a = t.param(&s, "a").unwrap();
        let sum = t.sum_rows(a).unwrap();
        assert_eq!(t.backward(sum, &s), Err(AutodiffError::NotScalar((1, 2))));
        let st = t.transpose(sum).unwrap();
        let l = t.sum_rows(st).unwrap();
        let g = t.backward(l, &s).unwrap();
        assert!(g.0[1].data.iter().all(|x| *x == 0.0));
        assert!(g.0[0].data.iter().all(|x| *x == 1.0));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3)).unwrap();
        let b = t.constant(Tensor::zeros(2, 3)).unwrap();
        assert!(matches!(t.matmul(a, b), Err(AutodiffError::Shape { .. })));
        let c = t.constant(Tensor::zeros(3, 3)).unwrap();
        assert!(matches!(t.add(a, c), Err(AutodiffError::Shape { .. })));
        assert!(matches!(t.row_select(a, &[2]), Err(AutodiffError::Index { index: 2, rows: 2 })));
    }

    #[test]
    fn non_finite_trips_error() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(1e300)).unwrap();
        assert_eq!(t.scalar_mul(a, 1e300), Err(AutodiffError::NonFinite("scalar_mul")));
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let s = store_with(&[("x", 4, 3), ("w", 3, 5), ("b", 1, 5), ("v", 4, 2), ("u", 5, 1)], 7);
        let mix = Arc::new(SparseRows::mean_of(&[vec![1, 2], vec![], vec![0, 1, 3], vec![3]], 4));
        let targets = vec![1.0, 0.0, 1.0, 0.0];
        let weights = vec![1.0, 2.5, 4.0, 1.0];
        let err = grad_check(&s, 1e-5, 100, 3, |t, s| {
            let x = t.param(s, "x")?;
            let w = t.param(s, "w")?;
            let b = t.param(s, "b")?;
            let v = t.param(s, "v")?;
            let u = t.param(s, "u")?;
            let h = t.matmul(x, w)?;
            let h = t.add_row(h, b)?;
            let h = t.relu(h)?;
            let m = t.mix(h, &mix)?;
            let h = t.add(h, m)?;
            let h = t.scalar_mul(h, 0.7)?;
            let c = t.concat_cols(&[h, v])?;
            let sel = t.row_select(c, &[0, 3, 3, 1])?;
            let mean = t.mean_rows(sel)?;
            let ms = t.row_select(mean, &[0, 0, 0, 0])?;
            let z = t.add(sel, ms)?;
            let z = t.row_select(z, &[0, 1, 2, 3])?;
            let zt = t.transpose(z)?;
            let zz = t.transpose(zt)?;
            let cols: Vec<usize> = (0..5).collect();
            let zz = t.transpose(zz)?;
            let zz = t.row_select(zz, &cols)?;
            let zz = t.transpose(zz)?;
            let logits = t.matmul(zz, u)?;
            let p = t.sigmoid(logits)?;
            let l = t.weighted_bce(p, &targets, &weights)?;
            let tot = t.sum_rows(l)?;
            Ok(tot)
        })
        .unwrap();
        assert!(err <= 1e-4, "rel err {err}");
    }

    #[test]
    fn linear_model_gradcheck_is_exact() {
        let s = store_with(&[("w", 3, 2)], 2);
        let mut rng = rng::from_seed(9);
        let x = random_tensor(4, 3, &mut rng);
        let err = grad_check(&s, 1e-5, 100, 1, |t, s| {
            let xv = t.constant(x.clone())?;
            let w = t.param(s, "w")?;
            let y = t.matmul(xv, w)?;
            let r = t.sum_rows(y)?;
            let rt = t.transpose(r)?;
            t.sum_rows(rt)
        })
        .unwrap();
        assert!(err <= 1e-9, "rel err {err}");
    }

    #[test]
    fn random_three_layer_composition() {
        let s = store_with(&[("w1", 5, 6), ("w2", 6, 6), ("w3", 6, 1)], 4);
        let mut rng = rng::from_seed(5);
        let x = random_tensor(7, 5, &mut rng);
        let err = grad_check(&s, 1e-5, 100, 2, |t, s| {
            let mut h = t.constant(x.clone())?;
            for name in ["w1", "w2"] {
                let w = t.param(s, name)?;
                h = t.matmul(h, w)?;
                h = t.relu(h)?;
            }
            let w = t.param(s, "w3")?;
            let o = t.matmul(h, w)?;
            let p = t.sigmoid(o)?;
            t.weighted_bce(p, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0], &[1.0; 7])
        })
        .unwrap();
        assert!(err <= 1e-4, "rel err {err}");
    }

    #[test]
    fn dropout_masks_and_scales() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_vec(1, 1000, vec![1.0; 1000])).unwrap();
        let mut rng = rng::from_seed(1);
        assert_eq!(t.dropout(a, 0.5, false, &mut rng).unwrap(), a);
        let d = t.dropout(a, 0.5, true, &mut rng).unwrap();
        let vals = &t.value(d).data;
        assert!(vals.iter().all(|v| *v == 0.0 || *v == 2.0));
        let zeros = vals.iter().filter(|v| **v == 0.0).count();
        assert!((400..600).contains(&zeros));
    }

    #[test]
    fn sgd_rules() {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::from_vec(1, 2, vec![1.0, -2.0])).unwrap();
        // momentum 0, lr 1, g = p
        let g = Gradients(vec![s.get("p").unwrap().clone()]);
        s.accumulate(&g, 1.0);
        s.sgd_step(1.0, 0.0);
        assert_eq!(s.get("p").unwrap().data, vec![0.0, 0.0]);
        // zero gradient leaves parameters alone
        let mut s = ParamStore::new();
        s.insert("p", Tensor::from_vec(1, 2, vec![3.0, 4.0])).unwrap();
        s.sgd_step(0.5, 0.9);
        assert_eq!(s.get("p").unwrap().data, vec![3.0, 4.0]);
        // two momentum steps with g = 1: v1 = 1, v2 = 1.9
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(0.0)).unwrap();
        for _ in 0..2 {
            s.accumulate(&Gradients(vec![Tensor::scalar(1.0)]), 1.0);
            s.sgd_step(0.1, 0.9);
        }
        assert!((s.get("p").unwrap().data[0] - -(0.1 + 0.19)).abs() < 1e-15);
        assert!(s.params()[0].grad.data[0] == 0.0);
    }

    #[test]
    fn duplicate_and_unknown_names() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::zeros(1, 1)).unwrap();
        assert_eq!(s.insert("a", Tensor::zeros(1, 1)), Err(AutodiffError::DuplicateParam("a".into())));
        assert_eq!(s.get("zz").unwrap_err(), AutodiffError::UnknownParam("zz".into()));
    }

    #[test]
    fn tape_replay_is_bit_identical() {
        let s = store_with(&[("w", 4, 4)], 11);
        let run = || {
            let mut rng = rng::from_seed(3);
            let mut t = Tape::new();
            let w = t.param(&s, "w").unwrap();
            let h = t.relu(w).unwrap();
            let h = t.dropout(h, 0.3, true, &mut rng).unwrap();
            let p = t.sigmoid(h).unwrap();
            let l = t.weighted_bce(p, &[1.0; 16], &[1.0; 16]).unwrap();
            t.value(l).data[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let s = store_with(&[("a", 2, 3), ("b", 1, 1)], 1);
        let map = s.to_checkpoint();
        let json = serde_json::to_string(&map).unwrap();
        let back: BTreeMap<String, ParamRecord> = serde_json::from_str(&json).unwrap();
        let r = ParamStore::from_checkpoint(&back, &["a".into(), "b".into()]).unwrap();
        assert_eq!(r.get("a").unwrap(), s.get("a").unwrap());
        assert!(ParamStore::from_checkpoint(&back, &["a".into()]).is_err());
    }
}
