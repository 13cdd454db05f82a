//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass in topological
//! order. [`Tape::backward`] walks it in reverse, so cycles cannot exist:
//! a node only ever refers to nodes created before it.

use std::sync::Arc;

use super::{DiffError, ParamId, ParameterStore, SparseMatrix, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    SpMm(Arc<SparseMatrix>, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    GatherRows(Var, Vec<usize>),
    /// Rows starting at the given offset.
    SliceRows(Var, usize),
    BroadcastRows(Var),
    ConcatCols(Vec<Var>),
    Sum(Var),
    BceWithPosWeight {
        logits: Var,
        targets: Tensor,
        pos_weight: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> DiffError {
    DiffError::ShapeMismatch(format!(
        "{what}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean weighted binary cross-entropy in the log-sum-exp stable form.
pub(crate) fn bce_value(logits: &Tensor, targets: &Tensor, pos_weight: f64) -> f64 {
    let n = logits.len().max(1) as f64;
    logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&x, &y)| pos_weight * y * softplus(-x) + (1.0 - y) * softplus(x))
        .sum::<f64>()
        / n
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_shared(Arc::new(value), op, needs_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Leaf bound to a trainable parameter; backward accumulates into the store.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push_shared(store.shared_value(id), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let value = Tensor::matmul_t(self.value(a), false, self.value(b), true)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMulNt(a, b), ng))
    }

    pub fn spmm(&mut self, adj: Arc<SparseMatrix>, x: Var) -> Result<Var, DiffError> {
        let value = adj.matmul_dense(self.value(x), false)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::SpMm(adj, x), ng))
    }

    /// Adds a `1×F` bias to every row of an `S×F` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, DiffError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("row bias", xv, bv));
        }
        let mut value = xv.clone();
        let f = xv.cols();
        for row in value.data_mut().chunks_mut(f) {
            for (a, b) in row.iter_mut().zip(bv.data()) {
                *a += b;
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddRowBias(x, bias), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av, bv));
        }
        let mut value = av.clone();
        value.add_assign(bv);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("mul", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(av.rows(), av.cols(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v * s);
        let ng = self.needs(x);
        self.push(value, Op::Scale(x, s), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.needs(x);
        self.push(value, Op::Relu(x), ng)
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, DiffError> {
        let xv = self.value(x);
        let f = xv.cols();
        let mut data = Vec::with_capacity(rows.len() * f);
        for &r in rows {
            if r >= xv.rows() {
                return Err(DiffError::IndexOutOfRange {
                    index: r,
                    len: xv.rows(),
                });
            }
            data.extend_from_slice(xv.row(r));
        }
        let value = Tensor::from_vec(rows.len(), f, data)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::GatherRows(x, rows.to_vec()), ng))
    }

    /// Repeats a `1×F` row `n` times.
    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let xv = self.value(x);
        if start > end || end > xv.rows() {
            return Err(DiffError::IndexOutOfRange {
                index: end,
                len: xv.rows(),
            });
        }
        let f = xv.cols();
        let value = Tensor::from_vec(end - start, f, xv.data()[start * f..end * f].to_vec())?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::SliceRows(x, start), ng))
    }

    pub fn broadcast_rows(&mut self, x: Var, n: usize) -> Result<Var, DiffError> {
        let xv = self.value(x);
        if xv.rows() != 1 {
            return Err(DiffError::ShapeMismatch(format!(
                "broadcast needs one row, got {}",
                xv.rows()
            )));
        }
        let value = Tensor::from_vec(n, xv.cols(), xv.data().repeat(n))?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::BroadcastRows(x), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(DiffError::ShapeMismatch("concat row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let ng = self.needs(x);
        self.push(value, Op::Sum(x), ng)
    }

    /// Mean of `−[w·y·log σ(x) + (1−y)·log(1−σ(x))]` over all elements.
    pub fn bce_with_pos_weight(
        &mut self,
        logits: Var,
        targets: &Tensor,
        pos_weight: f64,
    ) -> Result<Var, DiffError> {
        let lv = self.value(logits);
        if lv.shape() != targets.shape() {
            return Err(shape_err("bce", lv, targets));
        }
        let value = Tensor::scalar(bce_value(lv, targets, pos_weight));
        let ng = self.needs(logits);
        Ok(self.push(
            value,
            Op::BceWithPosWeight {
                logits,
                targets: targets.clone(),
                pos_weight,
            },
            ng,
        ))
    }

    /// Back-propagates from a `1×1` node. Leaf gradients are returned;
    /// with a `store`, parameter gradients are moved into it instead.
    pub fn backward(&self, loss: Var, store: Option<&mut ParameterStore>) -> Result<Gradients, DiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(DiffError::ShapeMismatch(format!(
                "backward from non-scalar {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            // Leaves keep their gradient for inspection.
            if matches!(node.op, Op::Constant | Op::Input | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant | Op::Input | Op::Param(_) => unreachable!("leaves handled above"),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, Tensor::matmul_t(&g, false, self.value(*b), true)?);
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, Tensor::matmul_t(self.value(*a), true, &g, false)?);
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, Tensor::matmul_t(&g, false, self.value(*b), false)?);
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, Tensor::matmul_t(&g, true, self.value(*a), false)?);
                    }
                }
                Op::SpMm(adj, x) => {
                    acc(&mut grads, *x, adj.matmul_dense(&g, true)?);
                }
                Op::AddRowBias(x, b) => {
                    if self.needs(*b) {
                        let f = g.cols();
                        let mut gb = Tensor::zeros(1, f);
                        for row in g.data().chunks(f) {
                            for (a, v) in gb.data_mut().iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        acc(&mut grads, *b, gb);
                    }
                    if self.needs(*x) {
                        acc(&mut grads, *x, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *a, Tensor::from_vec(g.rows(), g.cols(), d)?);
                    }
                    if self.needs(*b) {
                        let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *b, Tensor::from_vec(g.rows(), g.cols(), d)?);
                    }
                }
                Op::Scale(x, s) => {
                    let mut g = g;
                    g.scale_in_place(*s);
                    acc(&mut grads, *x, g);
                }
                Op::Relu(x) => {
                    let mut g = g;
                    for (gv, &out) in g.data_mut().iter_mut().zip(node.value.data()) {
                        if out <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    acc(&mut grads, *x, g);
                }
                Op::GatherRows(x, rows) => {
                    let xv = self.value(*x);
                    let f = xv.cols();
                    let mut gx = Tensor::zeros(xv.rows(), f);
                    for (i, &r) in rows.iter().enumerate() {
                        let src = g.row(i).to_vec();
                        for (a, b) in gx.data_mut()[r * f..(r + 1) * f].iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SliceRows(x, start) => {
                    let xv = self.value(*x);
                    let f = xv.cols();
                    let mut gx = Tensor::zeros(xv.rows(), f);
                    gx.data_mut()[start * f..start * f + g.len()].copy_from_slice(g.data());
                    acc(&mut grads, *x, gx);
                }
                Op::BroadcastRows(x) => {
                    let f = g.cols();
                    let mut gx = Tensor::zeros(1, f);
                    for row in g.data().chunks(f) {
                        for (a, v) in gx.data_mut().iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        if self.needs(p) {
                            let mut gp = Tensor::zeros(g.rows(), pc);
                            for r in 0..g.rows() {
                                let src = &g.row(r)[offset..offset + pc];
                                gp.data_mut()[r * pc..(r + 1) * pc].copy_from_slice(src);
                            }
                            acc(&mut grads, p, gp);
                        }
                        offset += pc;
                    }
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, Tensor::filled(xv.rows(), xv.cols(), g.item()));
                }
                Op::BceWithPosWeight {
                    logits,
                    targets,
                    pos_weight,
                } => {
                    let lv = self.value(*logits);
                    let scale = g.item() / lv.len().max(1) as f64;
                    let data = lv
                        .data()
                        .iter()
                        .zip(targets.data())
                        .map(|(&x, &y)| {
                            scale * (-pos_weight * y * sigmoid(-x) + (1.0 - y) * sigmoid(x))
                        })
                        .collect();
                    acc(&mut grads, *logits, Tensor::from_vec(lv.rows(), lv.cols(), data)?);
                }
            }
        }

        if let Some(store) = store {
            for (idx, node) in self.nodes.iter().enumerate() {
                if let Op::Param(id) = &node.op {
                    if let Some(g) = grads[idx].take() {
                        store.accumulate_grad_owned(*id, g)?;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}
