//! Reverse-mode differentiation over whole matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding
//! its output value. [`Tape::backward`] walks the nodes in reverse creation
//! order, which is a valid reverse topological order because operands are
//! always created before their consumers, and accumulates `∂loss/∂value`
//! into every [`Parameter`] that was read onto the tape.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)
}

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Serialize, Deserialize)]
#[serde(from = "ParameterRepr", into = "ParameterRepr")]
pub struct Parameter {
    id: u64,
    pub value: Matrix,
    pub grad: Matrix,
    pub(crate) first_moment: Matrix,
    pub(crate) second_moment: Matrix,
    pub(crate) step: u64,
}

#[derive(Serialize, Deserialize)]
struct ParameterRepr {
    value: Matrix,
    first_moment: Matrix,
    second_moment: Matrix,
    step: u64,
}

impl From<ParameterRepr> for Parameter {
    fn from(r: ParameterRepr) -> Self {
        let (rows, cols) = r.value.shape();
        Self {
            id: fresh_id(),
            value: r.value,
            grad: Matrix::zeros(rows, cols),
            first_moment: r.first_moment,
            second_moment: r.second_moment,
            step: r.step,
        }
    }
}

impl From<Parameter> for ParameterRepr {
    fn from(p: Parameter) -> Self {
        Self {
            value: p.value,
            first_moment: p.first_moment,
            second_moment: p.second_moment,
            step: p.step,
        }
    }
}

impl Clone for Parameter {
    /// Clones receive a fresh identity so a copy never aliases the original on a tape.
    fn clone(&self) -> Self {
        Self {
            id: fresh_id(),
            value: self.value.clone(),
            grad: self.grad.clone(),
            first_moment: self.first_moment.clone(),
            second_moment: self.second_moment.clone(),
            step: self.step,
        }
    }
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (rows, cols) = value.shape();
        Self {
            id: fresh_id(),
            value,
            grad: Matrix::zeros(rows, cols),
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    /// Drops optimizer state, e.g. when a snapshot starts a new training phase.
    pub fn reset_optimizer(&mut self) {
        let (rows, cols) = self.value.shape();
        self.first_moment = Matrix::zeros(rows, cols);
        self.second_moment = Matrix::zeros(rows, cols);
        self.step = 0;
        self.zero_grad();
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(u64),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    GroupMeanRows(Var, usize),
    BatchNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    StraightThrough(Var),
    Bce {
        prob: Var,
        targets: Vec<f64>,
        eps: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; gradients stop here.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Stop-gradient copy of an existing node.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn param(&mut self, p: &Parameter) -> Var {
        self.push(p.value.clone(), Op::Param(p.id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(value, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let value = broadcast_row(self.value(a), self.value(row), |x, r| x + r)?;
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    /// Multiplies every row of `a` elementwise by a `1×c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let value = broadcast_row(self.value(a), self.value(row), |x, r| x * r)?;
        Ok(self.push(value, Op::MulRow(a, row)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain("log of a non-positive value".into()));
        }
        let value = self.value(a).map(f64::ln);
        Ok(self.push(value, Op::Log(a)))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).mean());
        self.push(value, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshape(rows, cols)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.rows() != mb.rows() {
            return Err(Error::Dimension(format!(
                "concat_cols: {} rows vs {} rows",
                ma.rows(),
                mb.rows()
            )));
        }
        let mut data = Vec::with_capacity(ma.len() + mb.len());
        for r in 0..ma.rows() {
            data.extend_from_slice(ma.row(r));
            data.extend_from_slice(mb.row(r));
        }
        let value = Matrix::new(ma.rows(), ma.cols() + mb.cols(), data)?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Dimension(format!(
                "gather_rows index {bad} out of {} rows",
                m.rows()
            )));
        }
        let value = m.select_rows(idx);
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec())))
    }

    /// Averages consecutive blocks of `group` rows: `(g·n)×c → n×c`.
    pub fn group_mean_rows(&mut self, a: Var, group: usize) -> Result<Var> {
        let m = self.value(a);
        if group == 0 || !m.rows().is_multiple_of(group) {
            return Err(Error::Dimension(format!(
                "{} rows do not split into groups of {group}",
                m.rows()
            )));
        }
        let n = m.rows() / group;
        let mut out = Matrix::zeros(n, m.cols());
        for r in 0..m.rows() {
            let target = out.row_mut(r / group);
            for (o, v) in target.iter_mut().zip(m.row(r)) {
                *o += v / group as f64;
            }
        }
        Ok(self.push(out, Op::GroupMeanRows(a, group)))
    }

    /// Per-column standardization with batch statistics (biased variance).
    /// Returns the normalized node plus the batch means and variances.
    pub fn batch_norm(&mut self, a: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let m = self.value(a);
        if m.rows() < 2 {
            return Err(Error::Dimension(
                "batch normalization needs at least two rows in training mode".into(),
            ));
        }
        let n = m.rows() as f64;
        let means = m.column_means();
        let mut vars = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (c, v) in m.row(r).iter().enumerate() {
                vars[c] += (v - means[c]).powi(2) / n;
            }
        }
        let inv_std: Vec<f64> = vars.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - means[c]) * inv_std[c];
            }
        }
        let var = self.push(out, Op::BatchNorm { input: a, inv_std });
        Ok((var, means, vars))
    }

    /// Forward value `replacement`, backward identity into `a`.
    pub fn straight_through(&mut self, a: Var, replacement: Matrix) -> Result<Var> {
        self.value(a).same_shape(&replacement, "straight_through")?;
        Ok(self.push(replacement, Op::StraightThrough(a)))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets,
    /// with probabilities clamped to `[eps, 1 − eps]`.
    pub fn bce(&mut self, prob: Var, targets: &[f64], eps: f64) -> Result<Var> {
        let p = self.value(prob);
        if p.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "bce: {} probabilities vs {} targets",
                p.len(),
                targets.len()
            )));
        }
        let n = targets.len().max(1) as f64;
        let loss = p
            .data()
            .iter()
            .zip(targets)
            .map(|(&q, &h)| {
                let q = q.clamp(eps, 1.0 - eps);
                -(h * q.ln() + (1.0 - h) * (1.0 - q).ln())
            })
            .sum::<f64>()
            / n;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::Bce {
                prob,
                targets: targets.to_vec(),
                eps,
            },
        ))
    }

    /// Accumulates `∂loss/∂p` into `p.grad` for every parameter read onto this tape.
    /// Parameters not on the tape are left untouched.
    pub fn backward(&self, loss: Var, params: &mut [&mut Parameter]) -> Result<()> {
        let grads = self.gradients(loss)?;
        for p in params.iter_mut() {
            if let Some(g) = grads.get(&p.id) {
                p.grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to an arbitrary node, for tests and checks.
    pub fn gradient_of(&self, loss: Var, wrt: Var) -> Result<Matrix> {
        let all = self.node_gradients(loss)?;
        Ok(all[wrt.0]
            .clone()
            .unwrap_or_else(|| Matrix::zeros(self.value(wrt).rows(), self.value(wrt).cols())))
    }

    fn gradients(&self, loss: Var) -> Result<HashMap<u64, Matrix>> {
        let node_grads = self.node_gradients(loss)?;
        let mut out: HashMap<u64, Matrix> = HashMap::new();
        for (node, g) in self.nodes.iter().zip(node_grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                match out.get_mut(id) {
                    Some(acc) => acc.add_assign(&g)?,
                    None => {
                        out.insert(*id, g);
                    }
                }
            }
        }
        Ok(out)
    }

    fn node_gradients(&self, loss: Var) -> Result<Vec<Option<Matrix>>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward called for a value that was never recorded on this tape".into(),
            ));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_t(val(*b))?)?;
                accumulate(grads, *b, val(*a).t_matmul(g)?)?;
            }
            Op::MatMulT(a, b) => {
                accumulate(grads, *a, g.matmul(val(*b))?)?;
                accumulate(grads, *b, g.t_matmul(val(*a))?)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y)?)?;
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y)?)?;
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s))?,
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(
                    grads,
                    *row,
                    Matrix::row_vector(&g.column_means()).scale(g.rows() as f64),
                )?;
            }
            Op::MulRow(a, row) => {
                accumulate(grads, *a, broadcast_row(g, val(*row), |x, r| x * r)?)?;
                let prod = g.zip_map(val(*a), |x, y| x * y)?;
                accumulate(
                    grads,
                    *row,
                    Matrix::row_vector(&prod.column_means()).scale(prod.rows() as f64),
                )?;
            }
            Op::Relu(a) => accumulate(
                grads,
                *a,
                g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 })?,
            )?,
            Op::Sigmoid(a) => {
                accumulate(grads, *a, g.zip_map(&node.value, |d, y| d * y * (1.0 - y))?)?
            }
            Op::Log(a) => accumulate(grads, *a, g.zip_map(val(*a), |d, x| d / x)?)?,
            Op::Square(a) => accumulate(grads, *a, g.zip_map(val(*a), |d, x| 2.0 * d * x)?)?,
            Op::Sum(a) => {
                let m = val(*a);
                accumulate(grads, *a, Matrix::filled(m.rows(), m.cols(), g.get(0, 0)))?
            }
            Op::Mean(a) => {
                let m = val(*a);
                let n = m.len().max(1) as f64;
                accumulate(
                    grads,
                    *a,
                    Matrix::filled(m.rows(), m.cols(), g.get(0, 0) / n),
                )?
            }
            Op::Reshape(a) => {
                let m = val(*a);
                accumulate(grads, *a, g.clone().reshape(m.rows(), m.cols())?)?
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols();
                let cb = val(*b).cols();
                let mut ga = Matrix::zeros(g.rows(), ca);
                let mut gb = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::GatherRows(a, idx) => {
                let m = val(*a);
                let mut ga = Matrix::zeros(m.rows(), m.cols());
                for (k, &src) in idx.iter().enumerate() {
                    for (o, d) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                        *o += d;
                    }
                }
                accumulate(grads, *a, ga)?;
            }
            Op::GroupMeanRows(a, group) => {
                let m = val(*a);
                let mut ga = Matrix::zeros(m.rows(), m.cols());
                for r in 0..m.rows() {
                    for (o, d) in ga.row_mut(r).iter_mut().zip(g.row(r / group)) {
                        *o = d / *group as f64;
                    }
                }
                accumulate(grads, *a, ga)?;
            }
            Op::BatchNorm { input, inv_std } => {
                let xhat = &node.value;
                let n = xhat.rows() as f64;
                let cols = xhat.cols();
                let mut sum_g = vec![0.0; cols];
                let mut sum_gx = vec![0.0; cols];
                for r in 0..xhat.rows() {
                    for c in 0..cols {
                        sum_g[c] += g.get(r, c);
                        sum_gx[c] += g.get(r, c) * xhat.get(r, c);
                    }
                }
                let mut ga = Matrix::zeros(xhat.rows(), cols);
                for r in 0..xhat.rows() {
                    for c in 0..cols {
                        let v = inv_std[c] / n
                            * (n * g.get(r, c) - sum_g[c] - xhat.get(r, c) * sum_gx[c]);
                        ga.set(r, c, v);
                    }
                }
                accumulate(grads, *input, ga)?;
            }
            Op::StraightThrough(a) => accumulate(grads, *a, g.clone())?,
            Op::Bce { prob, targets, eps } => {
                let p = val(*prob);
                let n = targets.len().max(1) as f64;
                let upstream = g.get(0, 0);
                let data = p
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&q, &h)| {
                        if q <= *eps || q >= 1.0 - eps {
                            0.0
                        } else {
                            upstream * (-h / q + (1.0 - h) / (1.0 - q)) / n
                        }
                    })
                    .collect();
                accumulate(grads, *prob, Matrix::new(p.rows(), p.cols(), data)?)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn broadcast_row(a: &Matrix, row: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(Error::Dimension(format!(
            "row broadcast of {}x{} onto {}x{}",
            row.rows(),
            row.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let mut out = a.clone();
    let r = row.data();
    for i in 0..out.rows() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(r) {
            *o = f(*o, b);
        }
    }
    Ok(out)
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
