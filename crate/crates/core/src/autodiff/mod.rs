//! Tape-based reverse-mode differentiation over whole matrices.
//!
//! Every primitive appends one node to a [`Tape`] holding its value and the
//! handles of its inputs. [`Tape::backward`] walks the nodes in reverse
//! insertion order, which is a valid reverse topological order because a
//! node can only reference nodes created before it.
//!
//! ```
//! use npgnn_core::autodiff::Tape;
//! use npgnn_core::DenseMatrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(DenseMatrix::from_rows(&[[-1.0, 1.0], [2.0, -2.0]]));
//! let r = tape.relu(w);
//! let loss = tape.sum(r);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(&tape, w), DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
//! ```

mod gradcheck;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{
    relu, sigmoid, softplus, Axis, DenseMatrix, ElementwiseOp, ReduceOp, SparseMatrix,
};

pub use gradcheck::{gradient_check, BlockCheck, GradCheckReport};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    /// Constant sparse matrix times a variable.
    SparseMatmul(Arc<SparseMatrix>, Var),
    AddRowBias(Var, Var),
    ConcatBroadcastRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    MeanRows(Var),
    WeightedBce {
        logits: Var,
        targets: Arc<SparseMatrix>,
        pos_weight: f64,
        norm: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], kept for leaf nodes only.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of the right shape if the loss does not
    /// depend on it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> DenseMatrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Matmul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// `s · d` where `s` is data, not a parameter.
    pub fn sparse_matmul(&mut self, s: &Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = s.matmul_dense(self.value(d))?;
        let rg = self.needs(d);
        Ok(self.push(value, Op::SparseMatmul(Arc::clone(s), d), rg))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::shape(
                "add_row_bias",
                format!("{:?} + {:?}", x.shape(), b.shape()),
            ));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (o, &bv) in value.row_mut(i).iter_mut().zip(b.row(0)) {
                *o += bv;
            }
        }
        let rg = self.needs(a) || self.needs(bias);
        Ok(self.push(value, Op::AddRowBias(a, bias), rg))
    }

    /// `[x | z]` with the `1 x d` row `z` appended to every row of `x`.
    pub fn concat_broadcast_row(&mut self, x: Var, z: Var) -> Result<Var> {
        let (xm, zm) = (self.value(x), self.value(z));
        if zm.rows() != 1 {
            return Err(Error::shape(
                "concat_broadcast_row",
                format!("z has shape {:?}", zm.shape()),
            ));
        }
        let (n, f, d) = (xm.rows(), xm.cols(), zm.cols());
        let mut value = DenseMatrix::zeros(n, f + d);
        for i in 0..n {
            let row = value.row_mut(i);
            row[..f].copy_from_slice(xm.row(i));
            row[f..].copy_from_slice(zm.row(0));
        }
        let rg = self.needs(x) || self.needs(z);
        Ok(self.push(value, Op::ConcatBroadcastRow(x, z), rg))
    }

    fn unary(&mut self, a: Var, f: fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map_with(f);
        let rg = self.needs(a);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, relu, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    fn binary(&mut self, a: Var, b: Var, kind: ElementwiseOp) -> Result<Var> {
        let value = self.value(a).elementwise(self.value(b), kind)?;
        let rg = self.needs(a) || self.needs(b);
        let op = match kind {
            ElementwiseOp::Add => Op::Add(a, b),
            ElementwiseOp::Sub => Op::Sub(a, b),
            ElementwiseOp::Mul => Op::Mul(a, b),
        };
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, ElementwiseOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, ElementwiseOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, ElementwiseOp::Mul)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.needs(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map_with(|v| v + s);
        let rg = self.needs(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = DenseMatrix::filled(1, 1, self.value(a).sum());
        let rg = self.needs(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Column means, as a `1 x c` node.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        if self.value(a).rows() == 0 {
            return Err(Error::input("mean over zero rows"));
        }
        let value = self.value(a).reduce(Axis::Rows, ReduceOp::Mean);
        let rg = self.needs(a);
        Ok(self.push(value, Op::MeanRows(a), rg))
    }

    /// Weighted binary cross-entropy averaged over every entry of `logits`
    /// and multiplied by `norm`:
    ///
    /// `norm / N · Σ −[w·y·log σ(l) + (1 − y)·log(1 − σ(l))]`
    ///
    /// where `y = 1` exactly at the stored positions of `targets`. The
    /// logarithms are evaluated as softplus terms so saturated logits stay
    /// finite. The result is the negated reconstruction log-likelihood.
    pub fn weighted_bce_with_logits(
        &mut self,
        logits: Var,
        targets: &Arc<SparseMatrix>,
        pos_weight: f64,
        norm: f64,
    ) -> Result<Var> {
        let l = self.value(logits);
        if l.shape() != targets.shape() {
            return Err(Error::shape(
                "weighted_bce_with_logits",
                format!("logits {:?} vs targets {:?}", l.shape(), targets.shape()),
            ));
        }
        let value = weighted_bce(l, targets, pos_weight, norm)?;
        let rg = self.needs(logits);
        Ok(self.push(
            DenseMatrix::filled(1, 1, value),
            Op::WeightedBce {
                logits,
                targets: Arc::clone(targets),
                pos_weight,
                norm,
            },
            rg,
        ))
    }

    /// Reverse pass from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        node: &Node,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        let mut acc = |v: Var, delta: DenseMatrix| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul_nt(self.value(*b))?);
                }
                if self.needs(*b) {
                    acc(*b, self.value(*a).matmul_tn(g)?);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::SparseMatmul(s, d) => acc(*d, s.transpose_matmul_dense(g)?),
            Op::AddRowBias(a, bias) => {
                acc(*a, g.clone());
                acc(*bias, g.reduce(Axis::Rows, ReduceOp::Sum));
            }
            Op::ConcatBroadcastRow(x, z) => {
                let f = self.value(*x).cols();
                let d = self.value(*z).cols();
                if self.needs(*x) {
                    let mut gx = DenseMatrix::zeros(g.rows(), f);
                    for i in 0..g.rows() {
                        gx.row_mut(i).copy_from_slice(&g.row(i)[..f]);
                    }
                    acc(*x, gx);
                }
                let mut gz = DenseMatrix::zeros(1, d);
                for i in 0..g.rows() {
                    for (o, &v) in gz.row_mut(0).iter_mut().zip(&g.row(i)[f..]) {
                        *o += v;
                    }
                }
                acc(*z, gz);
            }
            Op::Relu(a) => {
                // subgradient 0 at exactly 0
                let x = self.value(*a);
                let mut out = g.clone();
                for (o, &xv) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= 0.0 {
                        *o = 0.0;
                    }
                }
                acc(*a, out);
            }
            Op::Sigmoid(a) => {
                let mut out = g.clone();
                for (o, &s) in out.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    *o *= s * (1.0 - s);
                }
                acc(*a, out);
            }
            Op::Exp(a) => acc(*a, g.elementwise(&node.value, ElementwiseOp::Mul)?),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.elementwise(self.value(*b), ElementwiseOp::Mul)?);
                }
                if self.needs(*b) {
                    acc(*b, g.elementwise(self.value(*a), ElementwiseOp::Mul)?);
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, DenseMatrix::filled(r, c, g.get(0, 0)));
            }
            Op::MeanRows(a) => {
                let (r, c) = self.value(*a).shape();
                let mut out = DenseMatrix::zeros(r, c);
                let inv = 1.0 / r as f64;
                for i in 0..r {
                    for (o, &gv) in out.row_mut(i).iter_mut().zip(g.row(0)) {
                        *o = gv * inv;
                    }
                }
                acc(*a, out);
            }
            Op::WeightedBce {
                logits,
                targets,
                pos_weight,
                norm,
            } => {
                let l = self.value(*logits);
                let scale = g.get(0, 0) * norm / l.len() as f64;
                let mut out = DenseMatrix::zeros(l.rows(), l.cols());
                for i in 0..l.rows() {
                    let (pos, _) = targets.row(i);
                    let mut next = 0;
                    let lrow = l.row(i);
                    for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                        let s = sigmoid(lrow[j]);
                        let positive = next < pos.len() && pos[next] == j;
                        *o = if positive {
                            next += 1;
                            scale * pos_weight * (s - 1.0)
                        } else {
                            scale * s
                        };
                    }
                }
                acc(*logits, out);
            }
        }
        Ok(())
    }
}

/// Value of the fused loss computed by [`Tape::weighted_bce_with_logits`].
pub fn weighted_bce(
    logits: &DenseMatrix,
    targets: &SparseMatrix,
    pos_weight: f64,
    norm: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..logits.rows() {
        let (pos, _) = targets.row(i);
        let mut next = 0;
        for (j, &l) in logits.row(i).iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::Numeric(format!("non-finite logit at ({i}, {j})")));
            }
            if next < pos.len() && pos[next] == j {
                next += 1;
                total += pos_weight * softplus(-l);
            } else {
                total += softplus(l);
            }
        }
    }
    Ok(norm * total / logits.len() as f64)
}
