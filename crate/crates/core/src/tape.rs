//! Reverse-mode differentiation over a per-batch tape.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward sweep is a single reverse pass. Only the
//! operators the adapter graph needs are supported.

use crate::error::{Error, Result};
use crate::matrix::{gelu, gelu_grad, Matrix};
use crate::rope::{rotate_rows, RopeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `A Bᵀ`
    MatMulNt(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Scale(NodeId, f64),
    SoftmaxRows {
        x: NodeId,
        valid: usize,
    },
    Gelu(NodeId),
    /// Inverted-dropout multiplier per entry, 0 or 1/(1-p).
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    MeanRows {
        x: NodeId,
        valid: usize,
    },
    Gather {
        table: NodeId,
        indices: Vec<u32>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    Rope {
        x: NodeId,
        cfg: RopeConfig,
    },
    Sum(NodeId),
    MeanScalars(Vec<NodeId>),
    SoftmaxCrossEntropy {
        logits: NodeId,
        label: usize,
    },
    BinaryCrossEntropy {
        logits: NodeId,
        targets: Vec<f64>,
    },
    Mse {
        pred: NodeId,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A recorded forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `id`; exactly zero when `id` does not
    /// influence the loss.
    pub fn wrt(&self, id: NodeId) -> Matrix {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, id: NodeId) -> Matrix {
        let (r, c) = self.shapes[id.0];
        self.grads[id.0].take().unwrap_or_else(|| Matrix::zeros(r, c))
    }

    pub fn is_connected(&self, id: NodeId) -> bool {
        self.grads[id.0].is_some()
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient (frozen inputs).
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.get(0, 0)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, Op::MatMulNt(a, b), rg))
    }

    /// Adds the 1×cols `bias` to every row of `x`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_row_bias", xv, bv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.needs(&[x, bias]);
        Ok(self.push(out, Op::AddRowBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = self.value(x).map(|e| e * factor);
        let rg = self.needs(&[x]);
        self.push(v, Op::Scale(x, factor), rg)
    }

    /// Row softmax with columns `>= valid` masked out.
    pub fn softmax_rows(&mut self, x: NodeId, valid: usize) -> NodeId {
        let v = self.value(x).softmax_rows(valid);
        let rg = self.needs(&[x]);
        self.push(v, Op::SoftmaxRows { x, valid }, rg)
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(gelu);
        let rg = self.needs(&[x]);
        self.push(v, Op::Gelu(x), rg)
    }

    /// Multiplies by a precomputed inverted-dropout mask.
    pub fn dropout_mask(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::Shape {
                op: "dropout",
                left: xv.shape(),
                right: (mask.len(), 1),
            });
        }
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let v = Matrix::from_vec(xv.rows(), xv.cols(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::Dropout { x, mask }, rg))
    }

    pub fn mean_rows(&mut self, x: NodeId, valid: usize) -> Result<NodeId> {
        let v = self.value(x).mean_rows(valid)?;
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::MeanRows { x, valid }, rg))
    }

    /// Row gather from an embedding table. Index 0 (PAD) always yields a zero
    /// row and sends no gradient back to the table.
    pub fn gather(&mut self, table: NodeId, indices: &[u32]) -> Result<NodeId> {
        let t = self.value(table);
        let mut out = Matrix::zeros(indices.len(), t.cols());
        for (r, &ix) in indices.iter().enumerate() {
            let ix = ix as usize;
            if ix >= t.rows() {
                return Err(Error::Corrupt(format!(
                    "token index {ix} outside embedding table of {} rows",
                    t.rows()
                )));
            }
            if ix != crate::vocab::PAD as usize {
                out.row_mut(r).copy_from_slice(t.row(ix));
            }
        }
        let rg = self.needs(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if start + width > xv.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                left: xv.shape(),
                right: (start, width),
            });
        }
        let v = Matrix::from_fn(xv.rows(), width, |r, c| xv.get(r, start + c));
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(shape_err("concat_cols", self.value(parts[0]), pv));
            }
            cols += pv.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        let rg = self.needs(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Rotates row `r` of `x` as position `r`.
    pub fn rope(&mut self, x: NodeId, cfg: RopeConfig) -> Result<NodeId> {
        let v = rotate_rows(self.value(x), &cfg, false)?;
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::Rope { x, cfg }, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Matrix::filled(1, 1, self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(v, Op::Sum(x), rg)
    }

    pub fn mean_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::EmptySequence("mean of no losses".into()));
        }
        let mut total = 0.0;
        for &x in xs {
            if self.value(x).shape() != (1, 1) {
                return Err(Error::Contract("mean_scalars expects 1x1 inputs".into()));
            }
            total += self.scalar(x);
        }
        let v = Matrix::filled(1, 1, total / xs.len() as f64);
        let rg = self.needs(xs);
        Ok(self.push(v, Op::MeanScalars(xs.to_vec()), rg))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let z = self.value(logits);
        let loss = crate::loss::softmax_cross_entropy(z.data(), label)?;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::SoftmaxCrossEntropy { logits, label },
            rg,
        ))
    }

    pub fn binary_cross_entropy(&mut self, logits: NodeId, targets: &[f64]) -> Result<NodeId> {
        let z = self.value(logits);
        let loss = crate::loss::multilabel_bce(z.data(), targets)?;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::BinaryCrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    pub fn mse(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let loss = crate::loss::mse(self.value(pred).data(), target)?;
        let rg = self.needs(&[pred]);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        // Intermediate gradients are not useful to callers; keep leaves only.
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |id: NodeId, delta: Matrix| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        let val = |id: NodeId| &self.nodes[id.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                // dA = dC Bᵀ, dB = Aᵀ dC
                acc(*a, g.matmul_nt(val(*b)).expect("shapes recorded"));
                acc(*b, val(*a).matmul_tn(g).expect("shapes recorded"));
            }
            Op::MatMulNt(a, b) => {
                // C = A Bᵀ: dA = dC B, dB = dCᵀ A
                acc(*a, g.matmul(val(*b)).expect("shapes recorded"));
                acc(*b, g.matmul_tn(val(*a)).expect("shapes recorded"));
            }
            Op::AddRowBias(x, bias) => {
                acc(*x, g.clone());
                let mut db = vec![0.0; g.cols()];
                for r in 0..g.rows() {
                    for (d, &v) in db.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*bias, Matrix::row_vector(&db));
            }
            Op::Scale(x, f) => acc(*x, g.map(|v| v * f)),
            Op::SoftmaxRows { x, valid } => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (&y.row(r)[..*valid], &g.row(r)[..*valid]);
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, d) in dx.row_mut(r)[..*valid].iter_mut().enumerate() {
                        *d = yr[c] * (gr[c] - inner);
                    }
                }
                acc(*x, dx);
            }
            Op::Gelu(x) => {
                let dx = val(*x).zip_map(g, |xv, gv| gelu_grad(xv) * gv).expect("same shape");
                acc(*x, dx);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                acc(*x, Matrix::from_vec(g.rows(), g.cols(), data).expect("same shape"));
            }
            Op::MeanRows { x, valid } => {
                let xv = val(*x);
                let scale = 1.0 / *valid as f64;
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..*valid {
                    for (d, &v) in dx.row_mut(r).iter_mut().zip(g.data()) {
                        *d = v * scale;
                    }
                }
                acc(*x, dx);
            }
            Op::Gather { table, indices } => {
                let tv = val(*table);
                let mut dt = Matrix::zeros(tv.rows(), tv.cols());
                for (r, &ix) in indices.iter().enumerate() {
                    if ix == crate::vocab::PAD {
                        continue;
                    }
                    for (d, &v) in dt.row_mut(ix as usize).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*table, dt);
            }
            Op::SliceCols { x, start } => {
                let xv = val(*x);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let dp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                    offset += w;
                    acc(p, dp);
                }
            }
            Op::Rope { x, cfg } => {
                let dx = rotate_rows(g, cfg, true).expect("config validated on forward");
                acc(*x, dx);
            }
            Op::Sum(x) => {
                let xv = val(*x);
                acc(*x, Matrix::filled(xv.rows(), xv.cols(), g.get(0, 0)));
            }
            Op::MeanScalars(xs) => {
                let share = g.get(0, 0) / xs.len() as f64;
                for &x in xs {
                    acc(x, Matrix::filled(1, 1, share));
                }
            }
            Op::SoftmaxCrossEntropy { logits, label } => {
                let z = val(*logits);
                let mut p = z.softmax_rows(z.cols());
                p.data_mut()[*label] -= 1.0;
                acc(*logits, p.map(|v| v * g.get(0, 0)));
            }
            Op::BinaryCrossEntropy { logits, targets } => {
                let z = val(*logits);
                let n = targets.len() as f64;
                let data = z
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&zi, &t)| (crate::loss::sigmoid(zi) - t) / n * g.get(0, 0))
                    .collect();
                acc(*logits, Matrix::from_vec(z.rows(), z.cols(), data).expect("shape"));
            }
            Op::Mse { pred, target } => {
                let pv = val(*pred);
                let n = target.len() as f64;
                let data = pv
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| 2.0 * (p - t) / n * g.get(0, 0))
                    .collect();
                acc(*pred, Matrix::from_vec(pv.rows(), pv.cols(), data).expect("shape"));
            }
        }
    }
}

/// Forward pass mode; dropout is active only while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout multipliers for `len` entries drawn from `stream`.
pub fn dropout_mask(len: usize, p: f64, stream: crate::rng::Stream) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - p);
    Ok((0..len as u64)
        .map(|i| if stream.uniform(i) < p { 0.0 } else { keep })
        .collect())
}

/// Standalone dropout on a matrix.
pub fn dropout(m: &Matrix, p: f64, mode: Mode, stream: crate::rng::Stream) -> Result<Matrix> {
    let mask = dropout_mask(m.len(), p, stream)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok(m.clone());
    }
    let data = m.data().iter().zip(&mask).map(|(a, b)| a * b).collect();
    Matrix::from_vec(m.rows(), m.cols(), data)
}

impl Tape {
    /// Dropout node; in eval mode (or with `p == 0`) returns `x` unchanged.
    pub fn dropout(
        &mut self,
        x: NodeId,
        p: f64,
        mode: Mode,
        stream: crate::rng::Stream,
    ) -> Result<NodeId> {
        let mask = dropout_mask(self.value(x).len(), p, stream)?;
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        self.dropout_mask(x, mask)
    }
}
