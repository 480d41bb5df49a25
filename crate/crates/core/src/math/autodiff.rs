//! Reverse-mode differentiation over a tape of matrix-valued nodes.
//!
//! Nodes are appended in evaluation order, so the tape itself is a
//! topological order and the backward sweep is a single reverse pass that
//! touches every node once. Only the operations the Lipschitz MLP and the
//! VAE objective need are provided.

use crate::error::{Error, Result};
use crate::math::matrix::{gemm, Matrix};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    AddBias { x: Var, bias: Var },
    Lincomb { a: Var, ca: f64, b: Var, cb: f64 },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    Shift { a: Var },
    DivScalar { a: Var, s: Var },
    GroupSort { a: Var, perm: Vec<u32> },
    Softplus { a: Var },
    Square { a: Var },
    Log { a: Var },
    Sqrt { a: Var },
    SumCols { a: Var },
    SumAll { a: Var },
    SliceCols { a: Var, start: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// A computation record. Single-owner; build one per evaluation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the
    /// output (constants included).
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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

/// Sorts each consecutive group of `group` entries of every row in
/// descending order. Returns the sorted matrix and, for each output slot,
/// the column it was taken from.
pub fn groupsort_rows(m: &Matrix, group: usize) -> (Matrix, Vec<u32>) {
    let (rows, cols) = m.shape();
    debug_assert!(group > 0 && cols % group == 0);
    let mut out = Matrix::zeros(rows, cols);
    let mut perm = vec![0u32; rows * cols];
    let mut idx: Vec<usize> = Vec::with_capacity(group);
    for r in 0..rows {
        let src = m.row(r);
        for g0 in (0..cols).step_by(group) {
            if group == 2 {
                let (hi, lo) = if src[g0] >= src[g0 + 1] { (g0, g0 + 1) } else { (g0 + 1, g0) };
                perm[r * cols + g0] = hi as u32;
                perm[r * cols + g0 + 1] = lo as u32;
                continue;
            }
            idx.clear();
            idx.extend(g0..g0 + group);
            // Stable, so ties keep their original order.
            idx.sort_by(|&i, &j| src[j].partial_cmp(&src[i]).unwrap_or(std::cmp::Ordering::Equal));
            for (k, &i) in idx.iter().enumerate() {
                perm[r * cols + g0 + k] = i as u32;
            }
        }
        let dst = out.row_mut(r);
        for c in 0..cols {
            dst[c] = src[perm[r * cols + c] as usize];
        }
    }
    (out, perm)
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf whose gradient is not tracked.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Leaf, m, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, m: Matrix) -> Var {
        self.push(Op::Leaf, m, true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// `op(a) * op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let value = gemm(self.value(a), ta, self.value(b), tb)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul { a, b, ta, tb }, value, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// Adds a `1 x cols` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(bias) != (1, cols) {
            return Err(Error::dim("add_bias", format!("bias {:?} for {rows}x{cols}", self.shape(bias))));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).as_slice().to_vec();
        for r in 0..rows {
            for (v, bb) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Op::AddBias { x, bias }, value, rg))
    }

    /// `ca * a + cb * b`, elementwise.
    pub fn lincomb(&mut self, a: Var, ca: f64, b: Var, cb: f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("lincomb", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| ca * x + cb * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Lincomb { a, ca, b, cb }, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.lincomb(a, 1.0, b, 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.lincomb(a, 1.0, b, -1.0)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul { a, b }, value, rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(Op::Scale { a, c }, value, rg)
    }

    /// `a + c` for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(Op::Shift { a }, value, rg)
    }

    /// Divides every entry of `a` by the 1x1 node `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::dim("div_scalar", format!("divisor shape {:?}", self.shape(s))));
        }
        let d = self.value(s).item();
        let value = self.value(a).map(|x| x / d);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(Op::DivScalar { a, s }, value, rg))
    }

    /// GroupSort along each row.
    pub fn groupsort(&mut self, a: Var, group: usize) -> Result<Var> {
        let cols = self.shape(a).1;
        if group == 0 || cols % group != 0 {
            return Err(Error::dim("groupsort", format!("width {cols} not divisible by group size {group}")));
        }
        let (value, perm) = groupsort_rows(self.value(a), group);
        let rg = self.rg(a);
        Ok(self.push(Op::GroupSort { a, perm }, value, rg))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let rg = self.rg(a);
        self.push(Op::Softplus { a }, value, rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(Op::Square { a }, value, rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(Op::Log { a }, value, rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.rg(a);
        self.push(Op::Sqrt { a }, value, rg)
    }

    /// Row sums as a `rows x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut value = Matrix::zeros(m.rows(), 1);
        for r in 0..m.rows() {
            value.set(r, 0, m.row(r).iter().sum());
        }
        let rg = self.rg(a);
        self.push(Op::SumCols { a }, value, rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(Op::SumAll { a }, value, rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Euclidean norm of all entries, as a 1x1 node.
    pub fn norm(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        let s = self.sum_all(sq);
        self.sqrt(s)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(a).1;
        if start > end || end > cols {
            return Err(Error::dim("slice_cols", format!("[{start}, {end}) of {cols} columns")));
        }
        let value = self.value(a).slice_cols(start, end);
        let rg = self.rg(a);
        Ok(self.push(Op::SliceCols { a, start }, value, rg))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul { a, b, ta, tb } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let ga = if !ta { gemm(&g, false, bv, !tb)? } else { gemm(bv, *tb, &g, true)? };
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = if !tb { gemm(av, !ta, &g, false)? } else { gemm(&g, true, av, *ta)? };
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddBias { x, bias } => {
                    if self.rg(*bias) {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (acc, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Lincomb { a, ca, b, cb } => {
                    if self.rg(*a) {
                        accumulate_scaled(&mut grads, *a, *ca, &g);
                    }
                    if self.rg(*b) {
                        accumulate_scaled(&mut grads, *b, *cb, &g);
                    }
                }
                Op::Mul { a, b } => {
                    if self.rg(*a) {
                        let ga = g.zip_map(self.value(*b), |x, y| x * y);
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = g.zip_map(self.value(*a), |x, y| x * y);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale { a, c } => accumulate_scaled(&mut grads, *a, *c, &g),
                Op::Shift { a } => accumulate(&mut grads, *a, g),
                Op::DivScalar { a, s } => {
                    let d = self.value(*s).item();
                    if self.rg(*s) {
                        let dot: f64 = g.as_slice().iter().zip(self.value(*a).as_slice()).map(|(x, y)| x * y).sum();
                        accumulate(&mut grads, *s, Matrix::scalar(-dot / (d * d)));
                    }
                    if self.rg(*a) {
                        accumulate_scaled(&mut grads, *a, 1.0 / d, &g);
                    }
                }
                Op::GroupSort { a, perm } => {
                    let cols = g.cols();
                    let mut ga = Matrix::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        let (src, dst) = (g.row(r), ga.row_mut(r));
                        for c in 0..cols {
                            dst[perm[r * cols + c] as usize] += src[c];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus { a } => {
                    let ga = g.zip_map(self.value(*a), |x, y| x * sigmoid(y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square { a } => {
                    let ga = g.zip_map(self.value(*a), |x, y| 2.0 * x * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log { a } => {
                    let ga = g.zip_map(self.value(*a), |x, y| x / y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sqrt { a } => {
                    // Subgradient 0 at the kink.
                    let ga = g.zip_map(&node.value, |x, y| if y > 0.0 { x / (2.0 * y) } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols { a } => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let v = g.get(r, 0);
                        ga.row_mut(r).iter_mut().for_each(|x| *x = v);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll { a } => {
                    let (rows, cols) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(rows, cols, g.item()));
                }
                Op::SliceCols { a, start } => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        // Only leaves keep their gradient after the sweep; interior entries
        // were consumed.
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_scaled(grads: &mut [Option<Matrix>], v: Var, c: f64, g: &Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.axpy(c, g),
        slot @ None => *slot = Some(if c == 1.0 { g.clone() } else { g.scale(c) }),
    }
}
