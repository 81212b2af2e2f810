//! Reverse-mode automatic differentiation over a fixed operation set.
//!
//! Values are computed eagerly as nodes are recorded, so creation order is
//! a topological order and the backward pass is a single reverse sweep.
//! The operation set is deliberately small: exactly what a tiny transformer
//! encoder plus the training objectives need.

use crate::error::{Error, Result};
use crate::numerics::matrix::{l2_norm, matmul_into, softmax_slice, Matrix};

/// Handle to a node in a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    /// Row vector added to every row.
    AddRowBroadcast(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    /// Row vector multiplied into every row.
    MulRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId, f64),
    /// Multiply by a 1x1 node.
    ScaleByScalar(NodeId, NodeId),
    /// Divide by a 1x1 node.
    DivByScalar(NodeId, NodeId),
    Exp(NodeId),
    Log(NodeId),
    Silu(NodeId),
    /// Sum of all entries, producing 1x1.
    Sum(NodeId),
    /// Per-row sum, producing Rx1.
    SumRows(NodeId),
    RowL2Normalize(NodeId),
    SoftmaxRow(NodeId),
    /// Per-row stable log-sum-exp, producing Rx1.
    LogSumExpRow(NodeId),
    /// Per-row cosine between matching rows of two same-shape matrices,
    /// producing Rx1.
    CosineRows(NodeId, NodeId),
    /// Select rows by index (embedding lookup, pooling).
    Gather(NodeId, Vec<usize>),
    SliceCols(NodeId, usize, usize),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    /// Rotary position map: row index is the position, column pairs
    /// (k, k + d/2) are rotated by angle pos * theta^(-2k/d).
    Rope(NodeId, f64),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a node, if any path reached it.
    pub fn wrt(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Eagerly-evaluated computation graph.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        self.value(id).item()
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { trainable: true })
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<NodeId> {
        value.check_finite(op_name(&op))?;
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Leaf that participates in `backward` as a parameter.
    pub fn param(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(value, Op::Leaf { trainable: true })
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(value, Op::Leaf { trainable: false })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (m, row) = (self.value(a), self.value(v));
        if row.rows() != 1 || row.cols() != m.cols() {
            return Err(Error::Shape(format!(
                "add_row_broadcast {}x{} + {}x{}",
                m.rows(),
                m.cols(),
                row.rows(),
                row.cols()
            )));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(row.row(0)) {
                *o += *b;
            }
        }
        self.push(out, Op::AddRowBroadcast(a, v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_row_broadcast(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (m, row) = (self.value(a), self.value(v));
        if row.rows() != 1 || row.cols() != m.cols() {
            return Err(Error::Shape(format!(
                "mul_row_broadcast {}x{} * {}x{}",
                m.rows(),
                m.cols(),
                row.rows(),
                row.cols()
            )));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(row.row(0)) {
                *o *= *b;
            }
        }
        self.push(out, Op::MulRowBroadcast(a, v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let mut v = self.value(a).clone();
        for x in v.data_mut() {
            *x += c;
        }
        self.push(v, Op::AddConst(a, c))
    }

    pub fn scale_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.value(s).item().map_err(|_| {
            Error::Contract("scale_by_scalar: scale operand must be 1x1".into())
        })?;
        let v = self.value(a).scale(sv);
        self.push(v, Op::ScaleByScalar(a, s))
    }

    pub fn div_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.value(s).item().map_err(|_| {
            Error::Contract("div_by_scalar: divisor operand must be 1x1".into())
        })?;
        if sv == 0.0 {
            return Err(Error::Domain("div_by_scalar: division by zero".into()));
        }
        let v = self.value(a).scale(1.0 / sv);
        self.push(v, Op::DivByScalar(a, s))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let mut v = self.value(a).clone();
        for x in v.data_mut() {
            *x = x.exp();
        }
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let mut v = self.value(a).clone();
        for x in v.data_mut() {
            if *x <= 0.0 {
                return Err(Error::Domain(format!("log of non-positive value {}", x)));
            }
            *x = x.ln();
        }
        self.push(v, Op::Log(a))
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId> {
        let mut v = self.value(a).clone();
        for x in v.data_mut() {
            *x *= sigmoid(*x);
        }
        self.push(v, Op::Silu(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        let mut v = Matrix::zeros(m.rows(), 1);
        for r in 0..m.rows() {
            v.set(r, 0, m.row(r).iter().sum());
        }
        self.push(v, Op::SumRows(a))
    }

    pub fn row_l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).row_l2_normalized()?;
        self.push(v, Op::RowL2Normalize(a))
    }

    pub fn softmax_row(&mut self, a: NodeId) -> Result<NodeId> {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_slice(v.row_mut(r), 1.0);
        }
        self.push(v, Op::SoftmaxRow(a))
    }

    pub fn log_sum_exp_row(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        let mut v = Matrix::zeros(m.rows(), 1);
        for r in 0..m.rows() {
            v.set(r, 0, crate::numerics::matrix::log_sum_exp(m.row(r)));
        }
        self.push(v, Op::LogSumExpRow(a))
    }

    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ma, mb) = (self.value(a), self.value(b));
        if !ma.same_shape(mb) {
            return Err(Error::Shape(format!(
                "cosine_rows {}x{} vs {}x{}",
                ma.rows(),
                ma.cols(),
                mb.rows(),
                mb.cols()
            )));
        }
        let mut v = Matrix::zeros(ma.rows(), 1);
        for r in 0..ma.rows() {
            v.set(r, 0, crate::numerics::matrix::cosine(ma.row(r), mb.row(r))?);
        }
        self.push(v, Op::CosineRows(a, b))
    }

    pub fn gather(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let m = self.value(a);
        let mut v = Matrix::zeros(indices.len(), m.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= m.rows() {
                return Err(Error::Contract(format!(
                    "gather index {} out of range for {} rows",
                    i,
                    m.rows()
                )));
            }
            v.row_mut(r).copy_from_slice(m.row(i));
        }
        self.push(v, Op::Gather(a, indices.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let m = self.value(a);
        if start + len > m.cols() {
            return Err(Error::Shape(format!(
                "slice_cols [{}, {}) of {} cols",
                start,
                start + len,
                m.cols()
            )));
        }
        let mut v = Matrix::zeros(m.rows(), len);
        for r in 0..m.rows() {
            v.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start, len))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.rows() != mb.rows() {
            return Err(Error::Shape(format!(
                "concat_cols {}x{} | {}x{}",
                ma.rows(),
                ma.cols(),
                mb.rows(),
                mb.cols()
            )));
        }
        let mut v = Matrix::zeros(ma.rows(), ma.cols() + mb.cols());
        for r in 0..ma.rows() {
            v.row_mut(r)[..ma.cols()].copy_from_slice(ma.row(r));
            v.row_mut(r)[ma.cols()..].copy_from_slice(mb.row(r));
        }
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols() != mb.cols() {
            return Err(Error::Shape(format!(
                "concat_rows {}x{} / {}x{}",
                ma.rows(),
                ma.cols(),
                mb.rows(),
                mb.cols()
            )));
        }
        let mut data = Vec::with_capacity((ma.rows() + mb.rows()) * ma.cols());
        data.extend_from_slice(ma.data());
        data.extend_from_slice(mb.data());
        let v = Matrix::from_vec(ma.rows() + mb.rows(), ma.cols(), data)?;
        self.push(v, Op::ConcatRows(a, b))
    }

    /// Stack several row blocks into one matrix.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut iter = parts.iter();
        let mut acc = *iter
            .next()
            .ok_or_else(|| Error::Contract("stack_rows: empty input".into()))?;
        for p in iter {
            acc = self.concat_rows(acc, *p)?;
        }
        Ok(acc)
    }

    pub fn rope(&mut self, a: NodeId, theta: f64) -> Result<NodeId> {
        let m = self.value(a);
        if m.cols() % 2 != 0 {
            return Err(Error::Config(format!(
                "rope needs an even dimension, got {}",
                m.cols()
            )));
        }
        if theta <= 0.0 {
            return Err(Error::Config(format!("rope theta must be > 0, got {}", theta)));
        }
        let mut v = m.clone();
        rope_apply(&mut v, theta, false);
        self.push(v, Op::Rope(a, theta))
    }

    /// Reverse sweep from a scalar loss node. Returns per-node gradients;
    /// every trainable leaf reachable from the loss has a gradient of the
    /// leaf's shape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.rows() != 1 || lv.cols() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[idx];
        let mut send = |id: NodeId, delta: Matrix, grads: &mut [Option<Matrix>]| {
            match &mut grads[id.0] {
                Some(acc) => {
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a += *d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                // dA = G * B^T
                let bt = vb.transpose();
                let mut da = Matrix::zeros(va.rows(), va.cols());
                matmul_into(g, &bt, &mut da);
                send(*a, da, grads);
                // dB = A^T * G
                let at = va.transpose();
                let mut db = Matrix::zeros(vb.rows(), vb.cols());
                matmul_into(&at, g, &mut db);
                send(*b, db, grads);
            }
            Op::Transpose(a) => send(*a, g.transpose(), grads),
            Op::Add(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.clone(), grads);
            }
            Op::AddRowBroadcast(a, v) => {
                send(*a, g.clone(), grads);
                let mut dv = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, gv) in dv.row_mut(0).iter_mut().zip(g.row(r)) {
                        *d += *gv;
                    }
                }
                send(*v, dv, grads);
            }
            Op::Mul(a, b) => {
                send(*a, g.hadamard(self.value(*b))?, grads);
                send(*b, g.hadamard(self.value(*a))?, grads);
            }
            Op::MulRowBroadcast(a, v) => {
                let (va, vv) = (self.value(*a), self.value(*v));
                let mut da = g.clone();
                for r in 0..da.rows() {
                    for (d, b) in da.row_mut(r).iter_mut().zip(vv.row(0)) {
                        *d *= *b;
                    }
                }
                send(*a, da, grads);
                let mut dv = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dv.data_mut()[c] += g.get(r, c) * va.get(r, c);
                    }
                }
                send(*v, dv, grads);
            }
            Op::Scale(a, c) => send(*a, g.scale(*c), grads),
            Op::AddConst(a, _) => send(*a, g.clone(), grads),
            Op::ScaleByScalar(a, s) => {
                let sv = self.value(*s).item()?;
                send(*a, g.scale(sv), grads);
                let ds = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, av)| gv * av)
                    .sum();
                send(*s, Matrix::scalar(ds), grads);
            }
            Op::DivByScalar(a, s) => {
                let sv = self.value(*s).item()?;
                send(*a, g.scale(1.0 / sv), grads);
                let num: f64 = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, av)| gv * av)
                    .sum();
                send(*s, Matrix::scalar(-num / (sv * sv)), grads);
            }
            Op::Exp(a) => send(*a, g.hadamard(&node.value)?, grads),
            Op::Log(a) => {
                let va = self.value(*a);
                let mut da = g.clone();
                for (d, x) in da.data_mut().iter_mut().zip(va.data()) {
                    *d /= *x;
                }
                send(*a, da, grads);
            }
            Op::Silu(a) => {
                let va = self.value(*a);
                let mut da = g.clone();
                for (d, x) in da.data_mut().iter_mut().zip(va.data()) {
                    let s = sigmoid(*x);
                    *d *= s * (1.0 + x * (1.0 - s));
                }
                send(*a, da, grads);
            }
            Op::Sum(a) => {
                let va = self.value(*a);
                let gv = g.item()?;
                send(*a, Matrix::filled(va.rows(), va.cols(), gv), grads);
            }
            Op::SumRows(a) => {
                let va = self.value(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let gr = g.get(r, 0);
                    for d in da.row_mut(r) {
                        *d = gr;
                    }
                }
                send(*a, da, grads);
            }
            Op::RowL2Normalize(a) => {
                let va = self.value(*a);
                let vy = &node.value;
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let norm = l2_norm(va.row(r));
                    let y = vy.row(r);
                    let gr = g.row(r);
                    let gy: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    for c in 0..va.cols() {
                        da.row_mut(r)[c] = (gr[c] - gy * y[c]) / norm;
                    }
                }
                send(*a, da, grads);
            }
            Op::SoftmaxRow(a) => {
                let vy = &node.value;
                let mut da = Matrix::zeros(vy.rows(), vy.cols());
                for r in 0..vy.rows() {
                    let y = vy.row(r);
                    let gr = g.row(r);
                    let gy: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    for c in 0..vy.cols() {
                        da.row_mut(r)[c] = y[c] * (gr[c] - gy);
                    }
                }
                send(*a, da, grads);
            }
            Op::LogSumExpRow(a) => {
                let va = self.value(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let gr = g.get(r, 0);
                    let mut row: Vec<f64> = va.row(r).to_vec();
                    softmax_slice(&mut row, 1.0);
                    for (d, p) in da.row_mut(r).iter_mut().zip(row) {
                        *d = gr * p;
                    }
                }
                send(*a, da, grads);
            }
            Op::CosineRows(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let vc = &node.value;
                let mut da = Matrix::zeros(va.rows(), va.cols());
                let mut db = Matrix::zeros(vb.rows(), vb.cols());
                for r in 0..va.rows() {
                    let (xa, xb) = (va.row(r), vb.row(r));
                    let (na, nb) = (l2_norm(xa), l2_norm(xb));
                    let c = vc.get(r, 0);
                    let gr = g.get(r, 0);
                    for i in 0..xa.len() {
                        da.row_mut(r)[i] = gr * (xb[i] / (na * nb) - c * xa[i] / (na * na));
                        db.row_mut(r)[i] = gr * (xa[i] / (na * nb) - c * xb[i] / (nb * nb));
                    }
                }
                send(*a, da, grads);
                send(*b, db, grads);
            }
            Op::Gather(a, indices) => {
                let va = self.value(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for (r, &i) in indices.iter().enumerate() {
                    for (d, gv) in da.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += *gv;
                    }
                }
                send(*a, da, grads);
            }
            Op::SliceCols(a, start, len) => {
                let va = self.value(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    da.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                }
                send(*a, da, grads);
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                let mut da = Matrix::zeros(g.rows(), ca);
                let mut db = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                send(*a, da, grads);
                send(*b, db, grads);
            }
            Op::ConcatRows(a, b) => {
                let (ra, rb) = (self.value(*a).rows(), self.value(*b).rows());
                let cols = g.cols();
                let da = Matrix::from_vec(ra, cols, g.data()[..ra * cols].to_vec())?;
                let db = Matrix::from_vec(rb, cols, g.data()[ra * cols..].to_vec())?;
                send(*a, da, grads);
                send(*b, db, grads);
            }
            Op::Rope(a, theta) => {
                // Rotations are orthogonal; the adjoint rotates by the
                // negative angle.
                let mut da = g.clone();
                rope_apply(&mut da, *theta, true);
                send(*a, da, grads);
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rotate column pairs (k, k + d/2) of every row by pos * theta^(-2k/d),
/// where pos is the row index. `inverse` applies the negative angle.
fn rope_apply(m: &mut Matrix, theta: f64, inverse: bool) {
    let d = m.cols();
    let half = d / 2;
    let sign = if inverse { -1.0 } else { 1.0 };
    for pos in 0..m.rows() {
        let row = m.row_mut(pos);
        for k in 0..half {
            let freq = theta.powf(-2.0 * k as f64 / d as f64);
            let angle = sign * pos as f64 * freq;
            let (sin, cos) = angle.sin_cos();
            let (u, v) = (row[k], row[k + half]);
            row[k] = u * cos - v * sin;
            row[k + half] = u * sin + v * cos;
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf { .. } => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Add(..) => "add",
        Op::AddRowBroadcast(..) => "add_row_broadcast",
        Op::Mul(..) => "mul",
        Op::MulRowBroadcast(..) => "mul_row_broadcast",
        Op::Scale(..) => "scale",
        Op::AddConst(..) => "add_const",
        Op::ScaleByScalar(..) => "scale_by_scalar",
        Op::DivByScalar(..) => "div_by_scalar",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::Silu(..) => "silu",
        Op::Sum(..) => "sum",
        Op::SumRows(..) => "sum_rows",
        Op::RowL2Normalize(..) => "row_l2_normalize",
        Op::SoftmaxRow(..) => "softmax_row",
        Op::LogSumExpRow(..) => "log_sum_exp_row",
        Op::CosineRows(..) => "cosine_rows",
        Op::Gather(..) => "gather",
        Op::SliceCols(..) => "slice_cols",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatRows(..) => "concat_rows",
        Op::Rope(..) => "rope",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let loss = t.sum(x).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_cosine_at_equal_vectors_is_zero() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_vec(1, 3, vec![0.3, -0.2, 0.9]).unwrap()).unwrap();
        let y = t.constant(Matrix::from_vec(1, 3, vec![0.3, -0.2, 0.9]).unwrap()).unwrap();
        let c = t.cosine_rows(x, y).unwrap();
        let loss = t.sum(c).unwrap();
        let g = t.backward(loss).unwrap();
        for v in g.wrt(x).unwrap().data() {
            assert!(v.abs() < 1e-12, "cosine grad at maximum should vanish, got {}", v);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.param(Matrix::zeros(2, 2)).unwrap();
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn rope_identity_at_position_zero() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let r = t.rope(x, 10_000.0).unwrap();
        assert_eq!(t.value(r).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rope_hand_rotation_in_two_dims() {
        // d=2, pair 0 has angle = position; at position 1, [1,0] rotates
        // to [cos 1, sin 1].
        let mut t = Tape::new();
        let x = t
            .constant(Matrix::from_vec(2, 2, vec![5.0, -7.0, 1.0, 0.0]).unwrap())
            .unwrap();
        let r = t.rope(x, 123.456).unwrap();
        let v = t.value(r);
        assert!((v.get(1, 0) - 1.0f64.cos()).abs() < 1e-12);
        assert!((v.get(1, 1) - 1.0f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn rope_rejects_odd_dimension() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(t.rope(x, 100.0), Err(Error::Config(_))));
    }
}
