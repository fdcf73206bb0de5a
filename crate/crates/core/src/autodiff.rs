//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] is a write-once tape: every operation appends a node,
//! computes its value eagerly, and records which earlier nodes fed it.
//! Node ids only ever reference earlier nodes, so the tape is its own
//! topological order and [`Graph::backward`] is a single reverse sweep.
//!
//! Leaves are either constants or named parameters. Gradients are
//! accumulated for every node, but only parameter leaves are reported
//! by [`Graph::param_grads`]; inserting a frozen network's weights as
//! constants is how teacher/generator freezing is enforced.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;


// Resolves f64 math (exp, ln, sqrt, sin, powf) in pure-no_std
// builds. When any dependent links std, the identical inherent
// methods shadow the trait and this import appears unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Probability clamp for binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(String),
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    Add(TensorId, TensorId),
    /// `[m x n] + [1 x n]`, the row vector broadcast over rows.
    AddRow(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    Relu(TensorId),
    Sigmoid(TensorId),
    Exp(TensorId),
    SoftmaxRows(TensorId),
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
    },
    ConcatCols(Vec<TensorId>),
    ConcatRows(Vec<TensorId>),
    SliceCols {
        x: TensorId,
        start: usize,
        len: usize,
    },
    SliceRows {
        x: TensorId,
        start: usize,
        len: usize,
    },
    GatherRows {
        table: TensorId,
        indices: Vec<usize>,
    },
    SumAll(TensorId),
    MeanAll(TensorId),
    /// Mean binary cross-entropy against a constant target.
    BceMean {
        pred: TensorId,
        target: Tensor,
    },
    /// Mean (over rows) KL divergence of diagonal Gaussians to the
    /// standard normal: `(1/B) sum_b 0.5 sum_d (mu^2 + e^lv - 1 - lv)`.
    KlStdNormal {
        mu: TensorId,
        logvar: TensorId,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> TensorId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target w.r.t. this node.
    /// `None` if the node did not contribute.
    pub fn grad(&self, id: TensorId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn constant(&mut self, value: Tensor) -> TensorId {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, name: &str, value: Tensor) -> TensorId {
        self.push(value, Op::Param(String::from(name)))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(CoreError::shape("add: shapes differ"));
        }
        let mut value = ta.clone();
        value.add_assign(tb)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> Result<TensorId> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(CoreError::shape("add_row: row vector shape mismatch"));
        }
        let cols = ta.cols();
        let mut value = ta.clone();
        for r in 0..value.rows() {
            for c in 0..cols {
                let v = value.get(r, c) + tr.get(0, c);
                value.set(r, c, v);
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(CoreError::shape("sub: shapes differ"));
        }
        let value = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| ta.get(r, c) - tb.get(r, c));
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(CoreError::shape("mul: shapes differ"));
        }
        let value = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| ta.get(r, c) * tb.get(r, c));
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let value = self.value(a).map(|v| v * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|v| v.exp());
        self.push(value, Op::Exp(a))
    }

    /// Numerically stable softmax over each row.
    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let mut value = ta.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Per-row layer normalization with learned gain and bias
    /// (`[1 x n]` each).
    pub fn layer_norm(&mut self, x: TensorId, gain: TensorId, bias: TensorId) -> Result<TensorId> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let n = tx.cols();
        if tg.rows() != 1 || tg.cols() != n || tb.rows() != 1 || tb.cols() != n {
            return Err(CoreError::shape("layer_norm: gain/bias shape mismatch"));
        }
        let mut value = Tensor::zeros(tx.rows(), n);
        for r in 0..tx.rows() {
            let row = tx.row(r);
            let (mean, var) = mean_var(row);
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for c in 0..n {
                let xhat = (row[c] - mean) * inv;
                value.set(r, c, tg.get(0, c) * xhat + tb.get(0, c));
            }
        }
        Ok(self.push(value, Op::LayerNorm { x, gain, bias }))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(CoreError::shape("concat_rows: no inputs"));
        }
        let cols = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut value = Tensor::zeros(total, cols);
        let mut offset = 0;
        for &p in parts {
            let tp = self.value(p);
            if tp.cols() != cols {
                return Err(CoreError::shape("concat_rows: column counts differ"));
            }
            for r in 0..tp.rows() {
                value.row_mut(offset + r).copy_from_slice(tp.row(r));
            }
            offset += tp.rows();
        }
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(CoreError::shape("concat_cols: no inputs"));
        }
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let tp = self.value(p);
            if tp.rows() != rows {
                return Err(CoreError::shape("concat_cols: row counts differ"));
            }
            for r in 0..rows {
                for c in 0..tp.cols() {
                    value.set(r, offset + c, tp.get(r, c));
                }
            }
            offset += tp.cols();
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let tx = self.value(x);
        if start + len > tx.cols() {
            return Err(CoreError::shape("slice_cols: out of range"));
        }
        let value = Tensor::from_fn(tx.rows(), len, |r, c| tx.get(r, start + c));
        Ok(self.push(value, Op::SliceCols { x, start, len }))
    }

    pub fn slice_rows(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let value = self.value(x).slice_rows(start, len)?;
        Ok(self.push(value, Op::SliceRows { x, start, len }))
    }

    /// Row lookup (embedding gather). Indices must be in range.
    pub fn gather_rows(&mut self, table: TensorId, indices: &[usize]) -> Result<TensorId> {
        let tt = self.value(table);
        let mut value = Tensor::zeros(indices.len(), tt.cols());
        for (r, &ix) in indices.iter().enumerate() {
            if ix >= tt.rows() {
                return Err(CoreError::Input(alloc::format!(
                    "gather_rows: index {ix} out of {} rows",
                    tt.rows()
                )));
            }
            value.row_mut(r).copy_from_slice(tt.row(ix));
        }
        Ok(self.push(
            value,
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.value(a).values().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let s: f64 = ta.values().iter().sum();
        let value = Tensor::scalar(s / ta.len() as f64);
        self.push(value, Op::MeanAll(a))
    }

    /// Mean squared error against a constant target.
    pub fn mse_mean(&mut self, pred: TensorId, target: Tensor) -> Result<TensorId> {
        let target_id = self.constant(target);
        let diff = self.sub(pred, target_id)?;
        let sq = self.mul(diff, diff)?;
        Ok(self.mean_all(sq))
    }

    /// Mean binary cross-entropy against a constant target in `[0, 1]`.
    /// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce_mean(&mut self, pred: TensorId, target: Tensor) -> Result<TensorId> {
        let tp = self.value(pred);
        if !tp.same_shape(&target) {
            return Err(CoreError::shape("bce_mean: shapes differ"));
        }
        let n = target.len() as f64;
        let mut total = 0.0;
        for (&p, &y) in tp.values().iter().zip(target.values()) {
            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        let value = Tensor::scalar(total / n);
        Ok(self.push(value, Op::BceMean { pred, target }))
    }

    /// Mean-over-rows KL divergence to the standard normal prior.
    pub fn kl_std_normal(&mut self, mu: TensorId, logvar: TensorId) -> Result<TensorId> {
        let (tm, tl) = (self.value(mu), self.value(logvar));
        if !tm.same_shape(tl) {
            return Err(CoreError::shape("kl_std_normal: shapes differ"));
        }
        let rows = tm.rows() as f64;
        let mut total = 0.0;
        for (&m, &lv) in tm.values().iter().zip(tl.values()) {
            total += 0.5 * (m * m + lv.exp() - 1.0 - lv);
        }
        let value = Tensor::scalar(total / rows);
        Ok(self.push(value, Op::KlStdNormal { mu, logvar }))
    }

    /// Inverted-dropout mask as a constant node: keep with probability
    /// `1 - rate`, kept values scaled by `1/(1 - rate)`.
    pub fn dropout_mask(
        &mut self,
        rows: usize,
        cols: usize,
        rate: f64,
        rng: &mut SeededRng,
    ) -> TensorId {
        let keep = 1.0 - rate;
        let value = Tensor::from_fn(rows, cols, |_, _| {
            if rng.bernoulli(keep) {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.constant(value)
    }

    /// Reverse sweep from a scalar loss node. Populates gradients on
    /// every contributing node.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(CoreError::shape("backward: loss must be a 1x1 scalar"));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(out_grad) = self.nodes[i].grad.take() else {
                continue;
            };
            // Put it back for callers inspecting intermediate grads.
            self.nodes[i].grad = Some(out_grad.clone());
            let op = self.nodes[i].op.clone();
            match op {
                Op::Const | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let da = out_grad.matmul(&self.nodes[b.0].value.transpose())?;
                    let db = self.nodes[a.0].value.transpose().matmul(&out_grad)?;
                    self.accumulate(a, da)?;
                    self.accumulate(b, db)?;
                }
                Op::Transpose(a) => {
                    self.accumulate(a, out_grad.transpose())?;
                }
                Op::Add(a, b) => {
                    self.accumulate(a, out_grad.clone())?;
                    self.accumulate(b, out_grad)?;
                }
                Op::AddRow(a, row) => {
                    let mut drow = Tensor::zeros(1, out_grad.cols());
                    for r in 0..out_grad.rows() {
                        for c in 0..out_grad.cols() {
                            let v = drow.get(0, c) + out_grad.get(r, c);
                            drow.set(0, c, v);
                        }
                    }
                    self.accumulate(a, out_grad)?;
                    self.accumulate(row, drow)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, out_grad.clone())?;
                    self.accumulate(b, out_grad.map(|v| -v))?;
                }
                Op::Mul(a, b) => {
                    let ta = self.nodes[a.0].value.clone();
                    let tb = self.nodes[b.0].value.clone();
                    let da = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| {
                        out_grad.get(r, c) * tb.get(r, c)
                    });
                    let db = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| {
                        out_grad.get(r, c) * ta.get(r, c)
                    });
                    self.accumulate(a, da)?;
                    self.accumulate(b, db)?;
                }
                Op::Scale(a, factor) => {
                    self.accumulate(a, out_grad.map(|v| v * factor))?;
                }
                Op::Relu(a) => {
                    let ta = &self.nodes[a.0].value;
                    let da = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| {
                        if ta.get(r, c) > 0.0 {
                            out_grad.get(r, c)
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(a, da)?;
                }
                Op::Sigmoid(a) => {
                    let s = &self.nodes[i].value;
                    let da = Tensor::from_fn(s.rows(), s.cols(), |r, c| {
                        let v = s.get(r, c);
                        out_grad.get(r, c) * v * (1.0 - v)
                    });
                    self.accumulate(a, da)?;
                }
                Op::Exp(a) => {
                    let e = &self.nodes[i].value;
                    let da = Tensor::from_fn(e.rows(), e.cols(), |r, c| {
                        out_grad.get(r, c) * e.get(r, c)
                    });
                    self.accumulate(a, da)?;
                }
                Op::SoftmaxRows(a) => {
                    let s = &self.nodes[i].value;
                    let mut da = Tensor::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let dot: f64 = (0..s.cols())
                            .map(|c| out_grad.get(r, c) * s.get(r, c))
                            .sum();
                        for c in 0..s.cols() {
                            da.set(r, c, s.get(r, c) * (out_grad.get(r, c) - dot));
                        }
                    }
                    self.accumulate(a, da)?;
                }
                Op::LayerNorm { x, gain, bias } => {
                    let (dx, dg, db) = layer_norm_backward(
                        &self.nodes[x.0].value,
                        &self.nodes[gain.0].value,
                        &out_grad,
                    );
                    self.accumulate(x, dx)?;
                    self.accumulate(gain, dg)?;
                    self.accumulate(bias, db)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.nodes[p.0].value.cols();
                        let dp = Tensor::from_fn(out_grad.rows(), cols, |r, c| {
                            out_grad.get(r, offset + c)
                        });
                        self.accumulate(p, dp)?;
                        offset += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let dp = Tensor::from_fn(rows, out_grad.cols(), |r, c| {
                            out_grad.get(offset + r, c)
                        });
                        self.accumulate(p, dp)?;
                        offset += rows;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let tx = &self.nodes[x.0].value;
                    let mut dx = Tensor::zeros(tx.rows(), tx.cols());
                    for r in 0..out_grad.rows() {
                        for c in 0..len {
                            dx.set(r, start + c, out_grad.get(r, c));
                        }
                    }
                    self.accumulate(x, dx)?;
                }
                Op::SliceRows { x, start, len } => {
                    let tx = &self.nodes[x.0].value;
                    let mut dx = Tensor::zeros(tx.rows(), tx.cols());
                    for r in 0..len {
                        for c in 0..tx.cols() {
                            dx.set(start + r, c, out_grad.get(r, c));
                        }
                    }
                    self.accumulate(x, dx)?;
                }
                Op::GatherRows { table, indices } => {
                    let tt = &self.nodes[table.0].value;
                    let mut dt = Tensor::zeros(tt.rows(), tt.cols());
                    for (r, &ix) in indices.iter().enumerate() {
                        for c in 0..tt.cols() {
                            let v = dt.get(ix, c) + out_grad.get(r, c);
                            dt.set(ix, c, v);
                        }
                    }
                    self.accumulate(table, dt)?;
                }
                Op::SumAll(a) => {
                    let g = out_grad.item()?;
                    let ta = &self.nodes[a.0].value;
                    self.accumulate(a, Tensor::filled(ta.rows(), ta.cols(), g))?;
                }
                Op::MeanAll(a) => {
                    let ta = &self.nodes[a.0].value;
                    let g = out_grad.item()? / ta.len() as f64;
                    self.accumulate(a, Tensor::filled(ta.rows(), ta.cols(), g))?;
                }
                Op::BceMean { pred, target } => {
                    let g = out_grad.item()?;
                    let tp = &self.nodes[pred.0].value;
                    let n = target.len() as f64;
                    let mut dp = Tensor::zeros(tp.rows(), tp.cols());
                    for (k, (&p, &y)) in tp.values().iter().zip(target.values()).enumerate() {
                        // Zero slope where the clamp is active.
                        if p > BCE_EPS && p < 1.0 - BCE_EPS {
                            let d = (p - y) / (p * (1.0 - p)) / n;
                            dp.values_mut()[k] = g * d;
                        }
                    }
                    self.accumulate(pred, dp)?;
                }
                Op::KlStdNormal { mu, logvar } => {
                    let g = out_grad.item()?;
                    let tm = self.nodes[mu.0].value.clone();
                    let tl = self.nodes[logvar.0].value.clone();
                    let rows = tm.rows() as f64;
                    let dm = tm.map(|m| g * m / rows);
                    let dl = tl.map(|lv| g * 0.5 * (lv.exp() - 1.0) / rows);
                    self.accumulate(mu, dm)?;
                    self.accumulate(logvar, dl)?;
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, grad: Tensor) -> Result<()> {
        match &mut self.nodes[id.0].grad {
            Some(existing) => existing.add_assign(&grad),
            slot @ None => {
                *slot = Some(grad);
                Ok(())
            }
        }
    }

    /// Gradients of all parameter leaves, summed per name.
    pub fn param_grads(&self) -> BTreeMap<String, Tensor> {
        let mut out: BTreeMap<String, Tensor> = BTreeMap::new();
        for node in &self.nodes {
            if let Op::Param(name) = &node.op {
                let grad = match &node.grad {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(node.value.rows(), node.value.cols()),
                };
                match out.get_mut(name.as_str()) {
                    Some(acc) => {
                        acc.add_assign(&grad).expect("param shapes consistent");
                    }
                    None => {
                        out.insert(name.clone(), grad);
                    }
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn layer_norm_backward(x: &Tensor, gain: &Tensor, out_grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let n = x.cols();
    let mut dx = Tensor::zeros(x.rows(), n);
    let mut dg = Tensor::zeros(1, n);
    let mut db = Tensor::zeros(1, n);
    for r in 0..x.rows() {
        let row = x.row(r);
        let (mean, var) = mean_var(row);
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        // dxhat, and the two row means the normalization couples in.
        let mut dxhat = alloc::vec![0.0; n];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..n {
            let xhat = (row[c] - mean) * inv;
            let go = out_grad.get(r, c);
            dg.set(0, c, dg.get(0, c) + go * xhat);
            db.set(0, c, db.get(0, c) + go);
            dxhat[c] = go * gain.get(0, c);
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xhat;
        }
        mean_dxhat /= n as f64;
        mean_dxhat_xhat /= n as f64;
        for c in 0..n {
            let xhat = (row[c] - mean) * inv;
            dx.set(r, c, inv * (dxhat[c] - mean_dxhat - xhat * mean_dxhat_xhat));
        }
    }
    (dx, dg, db)
}
