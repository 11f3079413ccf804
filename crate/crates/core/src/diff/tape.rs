use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::matrix::logsumexp_excluding;
use super::{CsrMatrix, Matrix};
use crate::error::DiffError;

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Param,
    Constant,
    MatMul(usize, usize),
    SpMM(Arc<CsrMatrix>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    RowSoftmax(usize),
    Log(usize),
    Exp(usize),
    L2NormalizeRows(usize),
    SumRows(usize),
    SumCols(usize),
    Sum(usize),
    GatherRows(usize, Vec<usize>),
    Transpose(usize),
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    RowLogSumExp(usize, Option<Arc<Vec<Vec<usize>>>>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Append-only record of a differentiable computation.
///
/// Nodes are pushed in evaluation order, so reverse insertion order is a valid
/// reverse topological order for the adjoint sweep.
#[derive(Debug)]
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize, DiffError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(DiffError::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, op: Op, value: Matrix, op_name: &'static str) -> Result<Var, DiffError> {
        value.ensure_finite(op_name)?;
        let requires_grad = match &op {
            Op::Param => true,
            Op::Constant => false,
            _ => operands(&op).iter().any(|&i| self.nodes[i].requires_grad),
        };
        let index = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            index,
        })
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Result<Var, DiffError> {
        self.push(Op::Param, value, "param")
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Matrix) -> Result<Var, DiffError> {
        self.push(Op::Constant, value, "constant")
    }

    /// Forward value of a recorded node.
    pub fn value(&self, v: Var) -> &Matrix {
        let i = self.idx(v).expect("variable does not belong to this tape");
        &self.nodes[i].value
    }

    pub fn evaluate(&self, v: Var) -> Result<Matrix, DiffError> {
        Ok(self.nodes[self.idx(v)?].value.clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        self.push(Op::MatMul(ia, ib), value, "matmul")
    }

    /// `sparse · x` with the sparse side held constant.
    pub fn spmm(&mut self, sparse: &Arc<CsrMatrix>, x: Var) -> Result<Var, DiffError> {
        let ix = self.idx(x)?;
        let value = sparse.matmul(&self.nodes[ix].value)?;
        self.push(Op::SpMM(Arc::clone(sparse), ix), value, "spmm")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "add", |x, y| x + y)?;
        self.push(Op::Add(ia, ib), value, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "sub", |x, y| x - y)?;
        self.push(Op::Sub(ia, ib), value, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "mul", |x, y| x * y)?;
        self.push(Op::Mul(ia, ib), value, "mul")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.scale(factor);
        self.push(Op::Scale(ia, factor), value, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.map(|x| x.max(0.0));
        self.push(Op::Relu(ia), value, "relu")
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.row_softmax();
        self.push(Op::RowSoftmax(ia), value, "row_softmax")
    }

    pub fn log(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.map(f64::ln);
        self.push(Op::Log(ia), value, "log")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.map(f64::exp);
        self.push(Op::Exp(ia), value, "exp")
    }

    /// Scales each row to unit L2 norm; an all-zero row is an error.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.l2_normalize_rows()?;
        self.push(Op::L2NormalizeRows(ia), value, "l2_normalize_rows")
    }

    /// n×m → n×1.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.row_sums();
        self.push(Op::SumRows(ia), value, "sum_rows")
    }

    /// n×m → 1×m.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.col_sums();
        self.push(Op::SumCols(ia), value, "sum_cols")
    }

    /// n×m → 1×1.
    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = Matrix::scalar(self.nodes[ia].value.sum());
        self.push(Op::Sum(ia), value, "sum")
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.select_rows(index)?;
        self.push(Op::GatherRows(ia, index.to_vec()), value, "gather_rows")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.transpose();
        self.push(Op::Transpose(ia), value, "transpose")
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (lhs, rhs) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if lhs.rows() != rhs.rows() {
            return Err(DiffError::Shape {
                op: "concat_cols",
                lhs: lhs.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut value = Matrix::zeros(lhs.rows(), lhs.cols() + rhs.cols());
        for r in 0..lhs.rows() {
            let row = value.row_mut(r);
            row[..lhs.cols()].copy_from_slice(lhs.row(r));
            row[lhs.cols()..].copy_from_slice(rhs.row(r));
        }
        self.push(Op::ConcatCols(ia, ib), value, "concat_cols")
    }

    /// Vertical concatenation `[a; b]`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (top, bottom) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if top.cols() != bottom.cols() {
            return Err(DiffError::Shape {
                op: "concat_rows",
                lhs: top.shape(),
                rhs: bottom.shape(),
            });
        }
        let mut data = Vec::with_capacity(top.data().len() + bottom.data().len());
        data.extend_from_slice(top.data());
        data.extend_from_slice(bottom.data());
        let value = Matrix::from_vec(top.rows() + bottom.rows(), top.cols(), data);
        self.push(Op::ConcatRows(ia, ib), value, "concat_rows")
    }

    /// Row-wise log-sum-exp, n×m → n×1.
    pub fn row_logsumexp(&mut self, a: Var) -> Result<Var, DiffError> {
        self.lse(a, None)
    }

    /// Row-wise log-sum-exp that ignores the listed columns of each row.
    /// `excluded[r]` must leave at least one column of row `r` in play.
    pub fn row_logsumexp_excluding(&mut self, a: Var, mut excluded: Vec<Vec<usize>>) -> Result<Var, DiffError> {
        for row in &mut excluded {
            row.sort_unstable();
            row.dedup();
        }
        self.lse(a, Some(Arc::new(excluded)))
    }

    fn lse(&mut self, a: Var, excluded: Option<Arc<Vec<Vec<usize>>>>) -> Result<Var, DiffError> {
        let ia = self.idx(a)?;
        let x = &self.nodes[ia].value;
        if let Some(ex) = &excluded {
            if ex.len() != x.rows() {
                return Err(DiffError::Shape {
                    op: "row_logsumexp",
                    lhs: x.shape(),
                    rhs: (ex.len(), 0),
                });
            }
            if let Some(&index) = ex.iter().filter_map(|r| r.last()).find(|&&j| j >= x.cols()) {
                return Err(DiffError::IndexOutOfRange { index, rows: x.cols() });
            }
        }
        let values = x
            .iter_rows()
            .enumerate()
            .map(|(r, row)| logsumexp_excluding(row, excluded.as_ref().map_or(&[][..], |ex| &ex[r])))
            .collect();
        let value = Matrix::from_vec(x.rows(), 1, values);
        self.push(Op::RowLogSumExp(ia, excluded), value, "row_logsumexp")
    }

    /// Reverse sweep from a scalar `loss`; returns d(loss)/d(leaf) for each leaf.
    pub fn gradient(&self, loss: Var, wrt: &[Var]) -> Result<Vec<Matrix>, DiffError> {
        let il = self.idx(loss)?;
        let shape = self.nodes[il].value.shape();
        if shape != (1, 1) {
            return Err(DiffError::NonScalarLoss(shape.0, shape.1));
        }
        for &w in wrt {
            let i = self.idx(w)?;
            if !matches!(self.nodes[i].op, Op::Param) {
                return Err(DiffError::NotTrainable(i));
            }
        }

        let mut grads: Vec<Option<Matrix>> = vec![None; il + 1];
        grads[il] = Some(Matrix::scalar(1.0));
        for i in (0..=il).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        wrt.iter()
            .map(|w| {
                let node = &self.nodes[w.index];
                Ok(grads
                    .get(w.index)
                    .and_then(Option::clone)
                    .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols())))
            })
            .collect()
    }

    fn backprop(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<(), DiffError> {
        let val = |i: usize| &self.nodes[i].value;
        let mut send = |i: usize, contribution: Matrix| {
            if !self.nodes[i].requires_grad {
                return;
            }
            match &mut grads[i] {
                Some(acc) => acc.add_assign(&contribution),
                slot => *slot = Some(contribution),
            }
        };
        let wants = |i: usize| self.nodes[i].requires_grad;

        match &node.op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    send(*a, g.gemm(false, val(*b), true)?);
                }
                if wants(*b) {
                    send(*b, val(*a).gemm(true, g, false)?);
                }
            }
            Op::SpMM(s, x) => send(*x, s.transpose_matmul(g)?),
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    send(*a, g.zip_map(val(*b), "mul_grad", |x, y| x * y)?);
                }
                if wants(*b) {
                    send(*b, g.zip_map(val(*a), "mul_grad", |x, y| x * y)?);
                }
            }
            Op::Scale(a, f) => send(*a, g.scale(*f)),
            Op::Relu(a) => {
                // subgradient 0 at the kink
                send(*a, g.zip_map(val(*a), "relu_grad", |dg, x| if x > 0.0 { dg } else { 0.0 })?);
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (d, (p, q)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *d = p * (q - dot);
                    }
                }
                send(*a, dx);
            }
            Op::Log(a) => send(*a, g.zip_map(val(*a), "log_grad", |dg, x| dg / x)?),
            Op::Exp(a) => send(*a, g.zip_map(&node.value, "exp_grad", |dg, y| dg * y)?),
            Op::L2NormalizeRows(a) => {
                let x = val(*a);
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (d, (p, q)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *d = (q - p * dot) / norm;
                    }
                }
                send(*a, dx);
            }
            Op::SumRows(a) => {
                let (rows, cols) = val(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let gr = g.get(r, 0);
                    dx.row_mut(r).iter_mut().for_each(|d| *d = gr);
                }
                send(*a, dx);
            }
            Op::SumCols(a) => {
                let (rows, cols) = val(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    dx.row_mut(r).copy_from_slice(g.row(0));
                }
                send(*a, dx);
            }
            Op::Sum(a) => {
                let (rows, cols) = val(*a).shape();
                send(*a, Matrix::filled(rows, cols, g.item()));
            }
            Op::GatherRows(a, index) => {
                let (rows, cols) = val(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for (r, &src) in index.iter().enumerate() {
                    for (d, q) in dx.row_mut(src).iter_mut().zip(g.row(r)) {
                        *d += q;
                    }
                }
                send(*a, dx);
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::ConcatCols(a, b) => {
                let split = val(*a).cols();
                let rows = g.rows();
                let mut ga = Matrix::zeros(rows, split);
                let mut gb = Matrix::zeros(rows, g.cols() - split);
                for r in 0..rows {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..split]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[split..]);
                }
                send(*a, ga);
                send(*b, gb);
            }
            Op::ConcatRows(a, b) => {
                let split = val(*a).data().len();
                let cols = g.cols();
                send(*a, Matrix::from_vec(val(*a).rows(), cols, g.data()[..split].to_vec()));
                send(*b, Matrix::from_vec(g.rows() - val(*a).rows(), cols, g.data()[split..].to_vec()));
            }
            Op::RowLogSumExp(a, excluded) => {
                let x = val(*a);
                let mut dx = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let lse = node.value.get(r, 0);
                    let gr = g.get(r, 0);
                    let d = dx.row_mut(r);
                    for (d, &v) in d.iter_mut().zip(x.row(r)) {
                        *d = gr * (v - lse).exp();
                    }
                    if let Some(ex) = excluded {
                        ex[r].iter().for_each(|&j| d[j] = 0.0);
                    }
                }
                send(*a, dx);
            }
        }
        Ok(())
    }
}

fn operands(op: &Op) -> Vec<usize> {
    match op {
        Op::Param | Op::Constant => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::ConcatCols(a, b)
        | Op::ConcatRows(a, b) => {
            vec![*a, *b]
        }
        Op::SpMM(_, a)
        | Op::Scale(a, _)
        | Op::Relu(a)
        | Op::RowSoftmax(a)
        | Op::Log(a)
        | Op::Exp(a)
        | Op::L2NormalizeRows(a)
        | Op::SumRows(a)
        | Op::SumCols(a)
        | Op::Sum(a)
        | Op::GatherRows(a, _)
        | Op::Transpose(a)
        | Op::RowLogSumExp(a, _) => vec![*a],
    }
}
