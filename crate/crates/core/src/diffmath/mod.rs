//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward computation as a node
//! holding its value and the information needed to push an adjoint back to
//! its inputs. Handles to nodes are plain [`Var`] indices, so graphs are
//! built with ordinary method calls:
//!
//! ```
//! use rtdnet::diffmath::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Matrix::scalar(3.0));
//! let y = tape.mul(x, x);
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap().get(0, 0), 6.0);
//! ```
//!
//! Gradients accumulate into leaves across `backward` calls until
//! [`Tape::zero_grad`] is called. Shapes are checked eagerly and a mismatch
//! panics; arguments outside a primitive's domain return
//! [`Error::Domain`](crate::Error::Domain).

mod batchnorm;
mod matrix;
pub mod special;

pub use batchnorm::{batch_norm, BatchNormState, BnAffine};
pub use matrix::Matrix;

use crate::error::{contract, domain, Error, Result};

/// exp() saturates above this argument instead of returning infinity.
const EXP_MAX_ARG: f64 = 709.0;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    /// Elementwise map; `partials[k]` holds ∂out/∂inputs[k] per element.
    Map {
        inputs: Vec<Var>,
        partials: Vec<Matrix>,
    },
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MeanCols(Var),
    ConcatCols(Vec<Var>),
    Column(Var, usize),
}

#[derive(Debug)]
pub struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

impl Node {
    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.get(0, 0)
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let value = va.zip_map(vb, |x, y| x * y);
        let partials = vec![vb.clone(), va.clone()];
        self.map_with_partials(vec![a, b], value, partials)
    }

    /// `m + r` with the `1×c` row `r` repeated over every row of `m`.
    pub fn add_row(&mut self, m: Var, r: Var) -> Var {
        let value = broadcast_row(self.value(m), self.value(r), |x, y| x + y);
        let rg = self.needs(&[m, r]);
        self.push(value, Op::AddRow(m, r), rg)
    }

    /// `m ⊙ r` with the `1×c` row `r` repeated over every row of `m`.
    pub fn mul_row(&mut self, m: Var, r: Var) -> Var {
        let value = broadcast_row(self.value(m), self.value(r), |x, y| x * y);
        let rg = self.needs(&[m, r]);
        self.push(value, Op::MulRow(m, r), rg)
    }

    /// `m + c` with the `r×1` column `c` repeated over every column of `m`.
    pub fn add_col(&mut self, m: Var, c: Var) -> Var {
        let value = broadcast_col(self.value(m), self.value(c), |x, y| x + y);
        let rg = self.needs(&[m, c]);
        self.push(value, Op::AddCol(m, c), rg)
    }

    /// `m ⊙ c` with the `r×1` column `c` repeated over every column of `m`.
    pub fn mul_col(&mut self, m: Var, c: Var) -> Var {
        let value = broadcast_col(self.value(m), self.value(c), |x, y| x * y);
        let rg = self.needs(&[m, c]);
        self.push(value, Op::MulCol(m, c), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| (x + k, 1.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| {
            let t = x.tanh();
            (t, 1.0 - t * t)
        })
    }

    /// e^x, saturating at e^709 (with zero slope) instead of overflowing.
    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| {
            if x > EXP_MAX_ARG {
                (EXP_MAX_ARG.exp(), 0.0)
            } else {
                let e = x.exp();
                (e, e)
            }
        })
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.require_positive(a, "ln")?;
        Ok(self.unary(a, |x| (x.ln(), 1.0 / x)))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, special::softplus_with_sigmoid)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| (x * x, 2.0 * x))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.require_positive(a, "reciprocal")?;
        Ok(self.unary(a, |x| {
            let r = 1.0 / x;
            (r, -r * r)
        }))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.require_positive(a, "sqrt")?;
        Ok(self.unary(a, |x| {
            let s = x.sqrt();
            (s, 0.5 / s)
        }))
    }

    pub fn erf(&mut self, a: Var) -> Var {
        self.unary(a, |x| (special::erf(x), 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp()))
    }

    /// max(x, lo); elements at the floor get zero slope.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.unary(a, |x| if x < lo { (lo, 0.0) } else { (x, 1.0) })
    }

    /// min(x, hi); elements at the ceiling get zero slope.
    pub fn clamp_max(&mut self, a: Var, hi: f64) -> Var {
        self.unary(a, |x| if x > hi { (hi, 0.0) } else { (x, 1.0) })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        let rg = self.needs(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// Mean over rows: `r×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = m.rows() as f64;
        let mut out = vec![0.0; m.cols()];
        for i in 0..m.rows() {
            for (o, x) in out.iter_mut().zip(m.row(i)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        let rg = self.needs(&[a]);
        self.push(Matrix::row_vector(out), Op::MeanRows(a), rg)
    }

    /// Mean over columns: `r×c → r×1`.
    pub fn mean_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = m.cols() as f64;
        let out = (0..m.rows()).map(|i| m.row(i).iter().sum::<f64>() / n).collect();
        let rg = self.needs(&[a]);
        self.push(Matrix::col_vector(out), Op::MeanCols(a), rg)
    }

    /// Side-by-side concatenation of equally tall matrices.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows(), rows, "concat row mismatch");
            for i in 0..rows {
                for j in 0..m.cols() {
                    out.set(i, off + j, m.get(i, j));
                }
            }
            off += m.cols();
        }
        let rg = self.needs(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Column `j` as an `r×1` matrix.
    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let value = Matrix::col_vector(self.value(a).column(j));
        let rg = self.needs(&[a]);
        self.push(value, Op::Column(a, j), rg)
    }

    /// Elementwise map of one input given a function returning
    /// `(value, derivative)`.
    pub fn unary(&mut self, a: Var, f: impl Fn(f64) -> (f64, f64)) -> Var {
        let m = self.value(a);
        let mut value = Vec::with_capacity(m.len());
        let mut deriv = Vec::with_capacity(m.len());
        for &x in m.data() {
            let (v, d) = f(x);
            value.push(v);
            deriv.push(d);
        }
        let (r, c) = m.shape();
        self.map_with_partials(vec![a], Matrix::from_vec(r, c, value), vec![Matrix::from_vec(r, c, deriv)])
    }

    /// Elementwise map over several equally shaped inputs. `f` receives the
    /// element of every input and returns the output value together with
    /// its partial derivative with respect to each input.
    pub fn map_n<F>(&mut self, inputs: &[Var], f: F) -> Result<Var>
    where
        F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        assert!(!inputs.is_empty());
        let shape = self.value(inputs[0]).shape();
        for v in inputs {
            assert_eq!(self.value(*v).shape(), shape, "map_n shape mismatch");
        }
        let len = shape.0 * shape.1;
        let mut value = Vec::with_capacity(len);
        let mut partials: Vec<Vec<f64>> = vec![Vec::with_capacity(len); inputs.len()];
        let mut args = vec![0.0; inputs.len()];
        for e in 0..len {
            for (k, v) in inputs.iter().enumerate() {
                args[k] = self.nodes[v.0].value.data()[e];
            }
            let (val, ds) = f(&args)?;
            debug_assert_eq!(ds.len(), inputs.len());
            value.push(val);
            for (p, d) in partials.iter_mut().zip(ds) {
                p.push(d);
            }
        }
        let partials = partials.into_iter().map(|p| Matrix::from_vec(shape.0, shape.1, p)).collect();
        Ok(self.map_with_partials(inputs.to_vec(), Matrix::from_vec(shape.0, shape.1, value), partials))
    }

    fn map_with_partials(&mut self, inputs: Vec<Var>, value: Matrix, partials: Vec<Matrix>) -> Var {
        let rg = self.needs(&inputs);
        self.push(value, Op::Map { inputs, partials }, rg)
    }

    fn require_positive(&self, a: Var, what: &str) -> Result<()> {
        match self.value(a).data().iter().find(|x| !(**x > 0.0)) {
            Some(x) if x.is_nan() => Err(Error::Numerical(format!("{what} of NaN"))),
            Some(x) => Err(domain(format!("{what} of non-positive value {x}"))),
            None => Ok(()),
        }
    }

    /// Propagates ∂root/∂node back to every leaf that requires a gradient
    /// and adds it to that leaf's accumulated gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).shape() != (1, 1) {
            return Err(contract(format!("backward from non-scalar node of shape {:?}", self.value(root).shape())));
        }
        let mut adj: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let slot = &mut self.nodes[i].grad;
                match slot {
                    Some(acc) => acc.add_assign(&g),
                    None => *slot = Some(g),
                }
                continue;
            }
            let node = &self.nodes[i];
            let nodes = &self.nodes;
            let val = |v: &Var| &nodes[v.0].value;
            let live = |v: &Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if live(a) {
                        accumulate(&mut adj, *a, g.matmul_nt(val(b)));
                    }
                    if live(b) {
                        accumulate(&mut adj, *b, val(a).matmul_tn(&g));
                    }
                }
                Op::Add(a, b) => {
                    if live(b) {
                        accumulate(&mut adj, *b, g.clone());
                    }
                    if live(a) {
                        accumulate(&mut adj, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if live(b) {
                        accumulate(&mut adj, *b, g.map(|x| -x));
                    }
                    if live(a) {
                        accumulate(&mut adj, *a, g);
                    }
                }
                Op::AddRow(m, r) => {
                    if live(r) {
                        accumulate(&mut adj, *r, column_sums(&g));
                    }
                    if live(m) {
                        accumulate(&mut adj, *m, g);
                    }
                }
                Op::MulRow(m, r) => {
                    if live(r) {
                        accumulate(&mut adj, *r, column_sums(&g.zip_map(val(m), |x, y| x * y)));
                    }
                    if live(m) {
                        accumulate(&mut adj, *m, broadcast_row(&g, val(r), |x, y| x * y));
                    }
                }
                Op::AddCol(m, c) => {
                    if live(c) {
                        accumulate(&mut adj, *c, row_sums(&g));
                    }
                    if live(m) {
                        accumulate(&mut adj, *m, g);
                    }
                }
                Op::MulCol(m, c) => {
                    if live(c) {
                        accumulate(&mut adj, *c, row_sums(&g.zip_map(val(m), |x, y| x * y)));
                    }
                    if live(m) {
                        accumulate(&mut adj, *m, broadcast_col(&g, val(c), |x, y| x * y));
                    }
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut adj, *a, g.map(|x| k * x));
                }
                Op::Map { inputs, partials } => {
                    for (v, p) in inputs.iter().zip(partials) {
                        if live(v) {
                            accumulate(&mut adj, *v, g.zip_map(p, |x, d| x * d));
                        }
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Mean(a) => {
                    let (r, c) = val(a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, g.get(0, 0) / (r * c) as f64));
                }
                Op::MeanRows(a) => {
                    let (r, c) = val(a).shape();
                    let n = r as f64;
                    accumulate(&mut adj, *a, Matrix::from_fn(r, c, |_, j| g.get(0, j) / n));
                }
                Op::MeanCols(a) => {
                    let (r, c) = val(a).shape();
                    let n = c as f64;
                    accumulate(&mut adj, *a, Matrix::from_fn(r, c, |i, _| g.get(i, 0) / n));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = val(p).shape();
                        if live(p) {
                            accumulate(&mut adj, *p, Matrix::from_fn(r, c, |i, j| g.get(i, off + j)));
                        }
                        off += c;
                    }
                }
                Op::Column(a, j) => {
                    let (r, c) = val(a).shape();
                    let j = *j;
                    accumulate(&mut adj, *a, Matrix::from_fn(r, c, |i, k| if k == j { g.get(i, 0) } else { 0.0 }));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, delta: Matrix) {
    match &mut adj[v.0] {
        Some(acc) => acc.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn broadcast_row(m: &Matrix, r: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(r.shape(), (1, m.cols()), "row broadcast shape mismatch: {:?} vs {:?}", m.shape(), r.shape());
    let rv = r.data();
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.rows() {
        out.extend(m.row(i).iter().zip(rv).map(|(&x, &y)| f(x, y)));
    }
    Matrix::from_vec(m.rows(), m.cols(), out)
}

fn broadcast_col(m: &Matrix, c: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(c.shape(), (m.rows(), 1), "column broadcast shape mismatch: {:?} vs {:?}", m.shape(), c.shape());
    let cv = c.data();
    let mut out = Vec::with_capacity(m.len());
    for (i, &y) in cv.iter().enumerate() {
        out.extend(m.row(i).iter().map(|&x| f(x, y)));
    }
    Matrix::from_vec(m.rows(), m.cols(), out)
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (o, x) in out.iter_mut().zip(m.row(i)) {
            *o += x;
        }
    }
    Matrix::row_vector(out)
}

fn row_sums(m: &Matrix) -> Matrix {
    Matrix::col_vector((0..m.rows()).map(|i| m.row(i).iter().sum()).collect())
}
