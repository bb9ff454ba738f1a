//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every forward operation together with its cached
//! value. Nodes are appended in evaluation order, so node ids are already a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//!
//! Parameters are leaves registered with [`Tape::param`]; constants with
//! [`Tape::constant`]. Only parameters receive gradients.

use std::sync::Arc;

use super::{Matrix, SegmentPool, SparseMatrix, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddBias(Var, Var),
    ScaleRows(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sigmoid(Var),
    Relu(Var),
    LnSigmoid(Var),
    Mean(Vec<Var>),
    SegmentMean(Arc<SegmentPool>, Var),
    Scale(Var, f64),
    RowSelect(Var, Arc<[usize]>),
    Sum(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::AddBias(a, b)
            | Op::ScaleRows(a, b) => vec![*a, *b],
            Op::ConcatCols(v) | Op::ConcatRows(v) | Op::Mean(v) => v.clone(),
            Op::SparseMatMul(_, a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::LnSigmoid(a)
            | Op::SegmentMean(_, a)
            | Op::Scale(a, _)
            | Op::RowSelect(a, _)
            | Op::Sum(a) => vec![*a],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Append-only computation record.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

/// Gradients of a scalar loss with respect to every parameter slot.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Var>,
    grads: Vec<Matrix>,
}

impl Gradients {
    /// Gradient of a parameter, in registration order.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.params
            .iter()
            .position(|&p| p == var)
            .map(|i| &self.grads[i])
    }

    /// All parameter gradients in registration order.
    pub fn as_slice(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn into_vec(self) -> Vec<Matrix> {
        self.grads
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

/// `ln σ(x)`, stable for large |x|.
#[inline]
pub fn ln_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
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

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push_leaf(value);
        self.params.push(v);
        v
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_leaf(value)
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push_leaf(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Matrix, op: Op) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let id = self.nodes.len();
        assert!(
            op.inputs().iter().all(|v| v.0 < id),
            "tape inputs must precede their outputs"
        );
        self.nodes.push(Node { value, op });
        Ok(Var(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    pub fn sparse_matmul(&mut self, s: &Arc<SparseMatrix>, b: Var) -> Result<Var, TensorError> {
        let value = s.matmul(self.value(b))?;
        self.push("sparse_dense_matmul", value, Op::SparseMatMul(Arc::clone(s), b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push("add", value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).zip_map(self.value(b), "subtract", |x, y| x - y)?;
        self.push("subtract", value, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        self.push("hadamard", value, Op::Hadamard(a, b))
    }

    /// Adds the 1×c row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (am, bm) = (self.value(a), self.value(bias));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(TensorError::shape("add_bias", am.shape(), bm.shape()));
        }
        let mut value = am.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(bm.data()) {
                *o += b;
            }
        }
        self.push("add_bias", value, Op::AddBias(a, bias))
    }

    /// Scales row i of `a` by entry i of the column vector `v`.
    pub fn scale_rows(&mut self, a: Var, v: Var) -> Result<Var, TensorError> {
        let (am, vm) = (self.value(a), self.value(v));
        if vm.cols() != 1 || vm.rows() != am.rows() {
            return Err(TensorError::shape("scale_rows", am.shape(), vm.shape()));
        }
        let mut value = am.clone();
        for r in 0..value.rows() {
            let s = vm.data()[r];
            value.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        self.push("scale_rows", value, Op::ScaleRows(a, v))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = self.first_shape(parts, "concat_cols")?.0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(TensorError::shape("concat_cols", (rows, cols), s));
            }
            cols += s.1;
        }
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let cols = self.first_shape(parts, "concat_rows")?.1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(TensorError::shape("concat_rows", (rows, cols), m.shape()));
            }
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push("relu", value, Op::Relu(a))
    }

    pub fn ln_sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(ln_sigmoid);
        self.push("ln_sigmoid", value, Op::LnSigmoid(a))
    }

    /// Elementwise mean of equally shaped matrices.
    pub fn mean_over(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let shape = self.first_shape(parts, "mean_over")?;
        let mut value = Matrix::zeros(shape.0, shape.1);
        for &p in parts {
            let m = self.value(p);
            if m.shape() != shape {
                return Err(TensorError::shape("mean_over", shape, m.shape()));
            }
            value.add_assign(m);
        }
        let value = value.scaled(1.0 / parts.len() as f64);
        self.push("mean_over", value, Op::Mean(parts.to_vec()))
    }

    pub fn segment_mean(&mut self, pool: &Arc<SegmentPool>, b: Var) -> Result<Var, TensorError> {
        let value = pool.apply(self.value(b))?;
        self.push("segment_mean", value, Op::SegmentMean(Arc::clone(pool), b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        let value = self.value(a).scaled(c);
        self.push("scale", value, Op::Scale(a, c))
    }

    pub fn row_select(&mut self, a: Var, indices: impl Into<Arc<[usize]>>) -> Result<Var, TensorError> {
        let indices = indices.into();
        let value = self.value(a).select_rows(&indices)?;
        self.push("row_select", value, Op::RowSelect(a, indices))
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = Matrix::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum(a))
    }

    fn first_shape(&self, parts: &[Var], op: &'static str) -> Result<(usize, usize), TensorError> {
        parts
            .first()
            .map(|&p| self.shape(p))
            .ok_or(TensorError::EmptyInput { op })
    }

    /// Back-propagates from the scalar `loss` and returns one gradient per
    /// registered parameter (zeros for parameters the loss does not use).
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_shape = self.shape(loss);
        if loss_shape != (1, 1) {
            return Err(TensorError::NotScalar { shape: loss_shape });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut param_grads: Vec<Option<Matrix>> = vec![None; self.params.len()];

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    if let Some(slot) = self.params.iter().position(|p| p.0 == id) {
                        param_grads[slot] = Some(g);
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SparseMatMul(s, b) => {
                    accumulate(&mut grads, *b, s.t_matmul(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scaled(-1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::Hadamard(a, b) => {
                    let da = g.zip_map(self.value(*b), "hadamard", |x, y| x * y)?;
                    let db = g.zip_map(self.value(*a), "hadamard", |x, y| x * y)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddBias(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::ScaleRows(a, v) => {
                    let (am, vm) = (self.value(*a), self.value(*v));
                    let mut da = g.clone();
                    let mut dv = Matrix::zeros(vm.rows(), 1);
                    for r in 0..g.rows() {
                        let s = vm.data()[r];
                        da.row_mut(r).iter_mut().for_each(|o| *o *= s);
                        dv.data_mut()[r] = g.row(r).iter().zip(am.row(r)).map(|(x, y)| x * y).sum();
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *v, dv);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (h, w) = self.shape(p);
                        let dp = Matrix::from_vec(h, w, g.data()[offset * w..(offset + h) * w].to_vec())?;
                        offset += h;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::Sigmoid(a) => {
                    let da = g.zip_map(&node.value, "sigmoid", |x, y| x * y * (1.0 - y))?;
                    accumulate(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let da = g.zip_map(self.value(*a), "relu", |x, y| if y > 0.0 { x } else { 0.0 })?;
                    accumulate(&mut grads, *a, da);
                }
                Op::LnSigmoid(a) => {
                    let da = g.zip_map(self.value(*a), "ln_sigmoid", |x, y| x * sigmoid(-y))?;
                    accumulate(&mut grads, *a, da);
                }
                Op::Mean(parts) => {
                    let share = g.scaled(1.0 / parts.len() as f64);
                    for &p in parts {
                        accumulate(&mut grads, p, share.clone());
                    }
                }
                Op::SegmentMean(pool, b) => {
                    accumulate(&mut grads, *b, pool.apply_transpose(&g)?);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g.scaled(*c));
                }
                Op::RowSelect(a, indices) => {
                    let mut da = Matrix::zeros(self.value(*a).rows(), g.cols());
                    for (o, &i) in indices.iter().enumerate() {
                        for (d, x) in da.row_mut(i).iter_mut().zip(g.row(o)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0]));
                }
            }
        }

        let grads = param_grads
            .into_iter()
            .zip(&self.params)
            .map(|(g, p)| {
                g.unwrap_or_else(|| {
                    let (r, c) = self.shape(*p);
                    Matrix::zeros(r, c)
                })
            })
            .collect();
        Ok(Gradients {
            params: self.params.clone(),
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
