//! Reverse-mode automatic differentiation over batched row-major matrices.
//!
//! Every value on the tape is a `rows x cols` matrix (batch rows, feature
//! columns). Operations evaluate eagerly when pushed and remember their
//! operands; [`Tape::backward`] replays them in reverse. A tape is built for
//! one forward pass and dropped afterwards.

use super::tensor::{gemm, DenseTensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `x W^T + b` with `W: [out x in]`, `b: [1 x out]`.
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[B x k] * [B x 1]`, broadcasting the column.
    MulCol(Var, Var),
    /// `[B x k] + [1 x k]`, broadcasting the row.
    AddRow(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Silu(Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    /// Each row of `m` is a row-major `[r x c]` matrix applied to the same row of `v: [B x c]`.
    RowMatVec {
        m: Var,
        v: Var,
    },
}

#[derive(Clone, Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], len: usize, v: Var) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf (gradients are reported for it).
    pub fn param(&mut self, t: &DenseTensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf, true)
    }

    /// Constant leaf (no gradient flows into it).
    pub fn constant(&mut self, t: &DenseTensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len(), "constant shape");
        self.push(rows, cols, data, Op::Leaf, false)
    }

    pub fn full(&mut self, rows: usize, cols: usize, value: f64) -> Var {
        self.push(rows, cols, vec![value; rows * cols], Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.node(v).rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.node(v).cols
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn tensor(&self, v: Var) -> DenseTensor {
        let n = self.node(v);
        DenseTensor::matrix(n.rows, n.cols, n.value.clone())
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::usage(format!("{what}: shape {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (bsz, inp) = self.shape(x);
        let (out, win) = self.shape(w);
        if win != inp {
            return Err(Error::config(format!(
                "layer expects {win} inputs, batch has width {inp}"
            )));
        }
        if self.shape(b) != (1, out) {
            return Err(Error::config(format!("bias shape {:?}, expected (1, {out})", self.shape(b))));
        }
        let mut value = Vec::with_capacity(bsz * out);
        let bias = &self.node(b).value;
        for _ in 0..bsz {
            value.extend_from_slice(bias);
        }
        gemm(
            bsz,
            inp,
            out,
            &self.node(x).value,
            (inp, 1),
            &self.node(w).value,
            (1, inp),
            1.0,
            &mut value,
        );
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(bsz, out, value, Op::Linear { x, w, b }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::usage(format!("matmul: inner dims {k} vs {k2}")));
        }
        let mut value = vec![0.0; m * n];
        gemm(m, k, n, &self.node(a).value, (k, 1), &self.node(b).value, (n, 1), 0.0, &mut value);
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, value, Op::MatMul(a, b), rg))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, what)?;
        let value = self.node(a).value.iter().zip(&self.node(b).value).map(|(x, y)| f(*x, *y)).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(r, c, value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(col) != (r, 1) {
            return Err(Error::usage(format!("mul_col: column shape {:?}, expected ({r}, 1)", self.shape(col))));
        }
        let av = &self.node(a).value;
        let cv = &self.node(col).value;
        let value = (0..r * c).map(|i| av[i] * cv[i / c]).collect();
        let rg = self.rg(&[a, col]);
        Ok(self.push(r, c, value, Op::MulCol(a, col), rg))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::usage(format!("add_row: row shape {:?}, expected (1, {c})", self.shape(row))));
        }
        let av = &self.node(a).value;
        let rv = &self.node(row).value;
        let value = (0..r * c).map(|i| av[i] + rv[i % c]).collect();
        let rg = self.rg(&[a, row]);
        Ok(self.push(r, c, value, Op::AddRow(a, row), rg))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (r, c) = self.shape(a);
        let value = self.node(a).value.iter().map(|x| scale * x + shift).collect();
        let rg = self.rg(&[a]);
        self.push(r, c, value, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 0.0)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let value = self.node(a).value.iter().map(|x| f(*x)).collect();
        let rg = self.rg(&[a]);
        self.push(r, c, value, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x / (1.0 + (-x).exp()), Op::Silu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    /// Square root; the argument must stay strictly positive.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.node(a).value.iter().sum();
        let rg = self.rg(&[a]);
        self.push(1, 1, vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a).value.len() as f64;
        let s: f64 = self.node(a).value.iter().sum();
        let rg = self.rg(&[a]);
        self.push(1, 1, vec![s / n], Op::Mean(a), rg)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let value = self.node(a).value.chunks(c.max(1)).map(|row| row.iter().sum()).collect();
        let rg = self.rg(&[a]);
        self.push(r, 1, value, Op::RowSum(a), rg)
    }

    /// Column-wise concatenation of equally tall blocks.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::usage("concat of zero blocks"));
        };
        let r = self.rows(*first);
        if let Some(bad) = parts.iter().find(|p| self.rows(**p) != r) {
            return Err(Error::usage(format!("concat: row mismatch {} vs {r}", self.rows(*bad))));
        }
        let c: usize = parts.iter().map(|p| self.cols(*p)).sum();
        let mut value = Vec::with_capacity(r * c);
        for i in 0..r {
            for p in parts {
                let n = self.node(*p);
                value.extend_from_slice(&n.value[i * n.cols..(i + 1) * n.cols]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(r, c, value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(Error::usage(format!("slice {start}..{} of width {c}", start + len)));
        }
        let xv = &self.node(x).value;
        let mut value = Vec::with_capacity(r * len);
        for i in 0..r {
            value.extend_from_slice(&xv[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(r, len, value, Op::Slice { x, start }, rg))
    }

    /// Per-row matrix-vector product: row `i` of `m` holds a row-major
    /// `[r x c]` matrix with `c = cols(v)`; the result is `[B x r]`.
    pub fn row_matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (b, mc) = self.shape(m);
        let (bv, c) = self.shape(v);
        if b != bv || c == 0 || mc % c != 0 {
            return Err(Error::usage(format!(
                "row_matvec: matrix rows {:?} incompatible with vector rows {:?}",
                (b, mc),
                (bv, c)
            )));
        }
        let r = mc / c;
        let mv = &self.node(m).value;
        let vv = &self.node(v).value;
        let mut value = vec![0.0; b * r];
        for i in 0..b {
            let vrow = &vv[i * c..(i + 1) * c];
            for j in 0..r {
                let mrow = &mv[i * mc + j * c..i * mc + (j + 1) * c];
                value[i * r + j] = mrow.iter().zip(vrow).map(|(a, b)| a * b).sum();
            }
        }
        let rg = self.rg(&[m, v]);
        Ok(self.push(b, r, value, Op::RowMatVec { m, v }, rg))
    }

    /// Reverse sweep from a `1 x 1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::usage(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        // constants never receive gradients
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let len = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (bsz, inp) = self.shape(*x);
                let out = node.cols;
                if want(*x) {
                    let dx = accumulate(grads, len(*x), *x);
                    gemm(bsz, out, inp, g, (out, 1), &self.node(*w).value, (inp, 1), 1.0, dx);
                }
                if want(*w) {
                    let dw = accumulate(grads, len(*w), *w);
                    gemm(out, bsz, inp, g, (1, out), &self.node(*x).value, (inp, 1), 1.0, dw);
                }
                if want(*b) {
                    let db = accumulate(grads, len(*b), *b);
                    for row in g.chunks(out) {
                        for (d, gi) in db.iter_mut().zip(row) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = node.cols;
                if want(*a) {
                    let da = accumulate(grads, len(*a), *a);
                    gemm(m, n, k, g, (n, 1), &self.node(*b).value, (1, n), 1.0, da);
                }
                if want(*b) {
                    let db = accumulate(grads, len(*b), *b);
                    gemm(k, m, n, &self.node(*a).value, (1, k), g, (n, 1), 1.0, db);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if want(*a) {
                    axpy(accumulate(grads, len(*a), *a), 1.0, g);
                }
                if want(*b) {
                    axpy(accumulate(grads, len(*b), *b), sign, g);
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let bv = &self.node(*b).value;
                    let da = accumulate(grads, len(*a), *a);
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                if want(*b) {
                    let av = &self.node(*a).value;
                    let db = accumulate(grads, len(*b), *b);
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::MulCol(a, col) => {
                let c = node.cols;
                if want(*a) {
                    let cv = &self.node(*col).value;
                    let da = accumulate(grads, len(*a), *a);
                    for i in 0..g.len() {
                        da[i] += g[i] * cv[i / c];
                    }
                }
                if want(*col) {
                    let av = &self.node(*a).value;
                    let dc = accumulate(grads, len(*col), *col);
                    for i in 0..g.len() {
                        dc[i / c] += g[i] * av[i];
                    }
                }
            }
            Op::AddRow(a, row) => {
                let c = node.cols;
                if want(*a) {
                    axpy(accumulate(grads, len(*a), *a), 1.0, g);
                }
                if want(*row) {
                    let dr = accumulate(grads, len(*row), *row);
                    for i in 0..g.len() {
                        dr[i % c] += g[i];
                    }
                }
            }
            Op::Affine(a, s) => axpy(accumulate(grads, len(*a), *a), *s, g),
            Op::Tanh(a) => {
                let y = &node.value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    da[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Silu(a) => {
                let x = &self.node(*a).value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    let s = 1.0 / (1.0 + (-x[i]).exp());
                    da[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
                }
            }
            Op::Exp(a) => {
                let y = &node.value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    da[i] += g[i] * y[i];
                }
            }
            Op::Sin(a) => {
                let x = &self.node(*a).value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    da[i] += g[i] * x[i].cos();
                }
            }
            Op::Cos(a) => {
                let x = &self.node(*a).value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    da[i] -= g[i] * x[i].sin();
                }
            }
            Op::Sqrt(a) => {
                let y = &node.value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    da[i] += g[i] * 0.5 / y[i];
                }
            }
            Op::Square(a) => {
                let x = &self.node(*a).value;
                let da = accumulate(grads, len(*a), *a);
                for i in 0..g.len() {
                    da[i] += g[i] * 2.0 * x[i];
                }
            }
            Op::Sum(a) => {
                let da = accumulate(grads, len(*a), *a);
                da.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(a) => {
                let n = len(*a) as f64;
                let da = accumulate(grads, len(*a), *a);
                da.iter_mut().for_each(|d| *d += g[0] / n);
            }
            Op::RowSum(a) => {
                let c = self.cols(*a);
                let da = accumulate(grads, len(*a), *a);
                for (i, d) in da.iter_mut().enumerate() {
                    *d += g[i / c];
                }
            }
            Op::Concat(parts) => {
                let r = node.rows;
                let total = node.cols;
                let mut offset = 0;
                for p in parts {
                    let c = self.cols(*p);
                    if want(*p) {
                        let dp = accumulate(grads, len(*p), *p);
                        for i in 0..r {
                            for j in 0..c {
                                dp[i * c + j] += g[i * total + offset + j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::Slice { x, start } => {
                let c = self.cols(*x);
                let l = node.cols;
                let dx = accumulate(grads, len(*x), *x);
                for i in 0..node.rows {
                    for j in 0..l {
                        dx[i * c + start + j] += g[i * l + j];
                    }
                }
            }
            Op::RowMatVec { m, v } => {
                let (b, mc) = self.shape(*m);
                let c = self.cols(*v);
                let r = node.cols;
                if want(*m) {
                    let vv = &self.node(*v).value;
                    let dm = accumulate(grads, len(*m), *m);
                    for i in 0..b {
                        for j in 0..r {
                            let gij = g[i * r + j];
                            for k in 0..c {
                                dm[i * mc + j * c + k] += gij * vv[i * c + k];
                            }
                        }
                    }
                }
                if want(*v) {
                    let mv = &self.node(*m).value;
                    let dv = accumulate(grads, len(*v), *v);
                    for i in 0..b {
                        for j in 0..r {
                            let gij = g[i * r + j];
                            for k in 0..c {
                                dv[i * c + k] += gij * mv[i * mc + j * c + k];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant_from(2, 1, vec![1.0, 2.0]);
        let y = tape.square(x);
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn half_norm_of_wx_at_identity() {
        // loss = 1/2 |W x|^2 at W = I, x = (1, 2): dL/dW = (W x) x^T = [[1, 2], [2, 4]]
        let mut tape = Tape::new();
        let w = tape.param(&DenseTensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let x = tape.constant_from(2, 1, vec![1.0, 2.0]);
        let wx = tape.matmul(w, x).unwrap();
        let sq = tape.square(wx);
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &[1.0, 2.0, 2.0, 4.0]);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.constant_from(2, 2, vec![0.0; 4]);
        let b = tape.constant_from(2, 3, vec![0.0; 6]);
        assert!(tape.add(a, b).is_err());
        assert!(tape.slice_cols(a, 1, 2).is_err());
        assert!(tape.concat(&[]).is_err());
        let c = tape.constant_from(3, 1, vec![0.0; 3]);
        assert!(tape.mul_col(a, c).is_err());
    }

    #[test]
    fn row_matvec_matches_manual() {
        let mut tape = Tape::new();
        // one row holding [[1,2],[3,4],[5,6]] times (1, -1)
        let m = tape.constant_from(1, 6, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = tape.constant_from(1, 2, vec![1.0, -1.0]);
        let out = tape.row_matvec(m, v).unwrap();
        assert_eq!(tape.value(out), &[-1.0, -1.0, -1.0]);
    }
}
