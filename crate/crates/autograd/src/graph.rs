//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients for every node that depends on a differentiable leaf.
//!
//! Binary elementwise operations broadcast: each operand dimension must equal
//! the output dimension or be 1.

use std::cell::RefCell;
use std::rc::Rc;

use crate::mat::{gemm, Mat};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Silu,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Tanh,
    Sqrt,
    Square,
    Recip,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Unary(Var, Unary),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    Transpose(Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SegmentSoftmax(Var, Rc<[usize]>),
    LayerNormRows(Var, f64),
}

struct Node {
    value: Rc<Mat>,
    op: Op,
    needs_grad: bool,
}

/// Operation tape. Methods take `&self` so calls can be nested freely.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn broadcast_zip(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (rows, cols) = broadcast_shape(a.shape(), b.shape());
    let mut out = Mat::zeros(rows, cols);
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    for r in 0..rows {
        let ra = if ar == 1 { 0 } else { r };
        let rb = if br == 1 { 0 } else { r };
        for c in 0..cols {
            let x = a.get(ra, if ac == 1 { 0 } else { c });
            let y = b.get(rb, if bc == 1 { 0 } else { c });
            out.set(r, c, f(x, y));
        }
    }
    out
}

/// Sum a broadcast gradient back down to `shape`.
fn reduce_to(g: Mat, shape: (usize, usize)) -> Mat {
    if g.shape() == shape {
        return g;
    }
    let mut g = g;
    if shape.0 == 1 && g.rows() != 1 {
        g = g.sum_rows();
    }
    if shape.1 == 1 && g.cols() != 1 {
        g = g.sum_cols();
    }
    assert_eq!(g.shape(), shape, "gradient reduction failed");
    g
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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

fn unary_forward(kind: Unary, x: f64) -> f64 {
    match kind {
        Unary::Silu => x * sigmoid(x),
        Unary::Sigmoid => sigmoid(x),
        Unary::Softplus => softplus(x),
        Unary::Exp => x.exp(),
        Unary::Log => x.ln(),
        Unary::Tanh => x.tanh(),
        Unary::Sqrt => x.sqrt(),
        Unary::Square => x * x,
        Unary::Recip => 1.0 / x,
    }
}

/// d(out)/d(in) given input `x` and output `y`.
fn unary_derivative(kind: Unary, x: f64, y: f64) -> f64 {
    match kind {
        Unary::Silu => {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        }
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Softplus => sigmoid(x),
        Unary::Exp => y,
        Unary::Log => 1.0 / x,
        Unary::Tanh => 1.0 - y * y,
        Unary::Sqrt => 0.5 / y,
        Unary::Square => 2.0 * x,
        Unary::Recip => -y * y,
    }
}

fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

fn log_softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn segment_count(seg: &[usize]) -> usize {
    seg.iter().max().map_or(0, |m| m + 1)
}

fn segment_softmax(x: &Mat, seg: &[usize]) -> Mat {
    let n = segment_count(seg);
    let cols = x.cols();
    let mut max = Mat::filled(n, cols, f64::NEG_INFINITY);
    for (r, &s) in seg.iter().enumerate() {
        for c in 0..cols {
            let v = x.get(r, c);
            if v > max.get(s, c) {
                max.set(s, c, v);
            }
        }
    }
    let mut out = Mat::zeros(x.rows(), cols);
    let mut denom = Mat::zeros(n, cols);
    for (r, &s) in seg.iter().enumerate() {
        for c in 0..cols {
            let e = (x.get(r, c) - max.get(s, c)).exp();
            out.set(r, c, e);
            denom.set(s, c, denom.get(s, c) + e);
        }
    }
    for (r, &s) in seg.iter().enumerate() {
        for c in 0..cols {
            out.set(r, c, out.get(r, c) / denom.get(s, c));
        }
    }
    out
}

fn layer_norm_rows(x: &Mat, eps: f64) -> Mat {
    let mut out = x.clone();
    let n = x.cols() as f64;
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    out
}

fn scatter_add_rows(x: &Mat, idx: &[usize], n: usize) -> Mat {
    let mut out = Mat::zeros(n, x.cols());
    for (r, &i) in idx.iter().enumerate() {
        for (o, v) in out.row_slice_mut(i).iter_mut().zip(x.row_slice(r)) {
            *o += v;
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].needs_grad)
    }

    /// Differentiable leaf (a parameter or an input whose gradient is wanted).
    pub fn leaf(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(Mat::scalar(value))
    }

    pub fn value(&self, v: Var) -> Rc<Mat> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Copy of a node's value detached from the tape.
    pub fn detach(&self, v: Var) -> Var {
        let value = (*self.value(v)).clone();
        self.constant(value)
    }

    pub fn item(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(&self.value(b));
        self.push(value, Op::MatMul(a, b), self.needs(&[a, b]))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(&self.value(a), &self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b), self.needs(&[a, b]))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(&self.value(a), &self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b), self.needs(&[a, b]))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(&self.value(a), &self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b), self.needs(&[a, b]))
    }

    pub fn div(&self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(&self.value(a), &self.value(b), |x, y| x / y);
        self.push(value, Op::Div(a, b), self.needs(&[a, b]))
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s), self.needs(&[a]))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push(value, Op::AddScalar(a), self.needs(&[a]))
    }

    pub fn unary(&self, a: Var, kind: Unary) -> Var {
        let value = self.value(a).map(|x| unary_forward(kind, x));
        self.push(value, Op::Unary(a, kind), self.needs(&[a]))
    }

    pub fn silu(&self, a: Var) -> Var {
        self.unary(a, Unary::Silu)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn softplus(&self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(a, Unary::Sqrt)
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    pub fn recip(&self, a: Var) -> Var {
        self.unary(a, Unary::Recip)
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = Mat::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a), self.needs(&[a]))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(&self, a: Var) -> Var {
        let value = self.value(a).sum_rows();
        self.push(value, Op::SumRows(a), self.needs(&[a]))
    }

    pub fn mean_rows(&self, a: Var) -> Var {
        let n = self.shape(a).0.max(1) as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as a `rows x 1` column.
    pub fn sum_cols(&self, a: Var) -> Var {
        let value = self.value(a).sum_cols();
        self.push(value, Op::SumCols(a), self.needs(&[a]))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), self.needs(&[a]))
    }

    pub fn gather_rows(&self, a: Var, idx: Rc<[usize]>) -> Var {
        let value = self.value(a).gather_rows(&idx);
        self.push(value, Op::GatherRows(a, idx), self.needs(&[a]))
    }

    /// `out[idx[r]] += a[r]` into an `n`-row output.
    pub fn scatter_add_rows(&self, a: Var, idx: Rc<[usize]>, n: usize) -> Var {
        let value = scatter_add_rows(&self.value(a), &idx, n);
        self.push(value, Op::ScatterAddRows(a, idx), self.needs(&[a]))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let rows = values[0].rows();
        let cols: usize = values.iter().map(|v| v.cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for v in &values {
                assert_eq!(v.rows(), rows, "concat_cols row mismatch");
                out.row_slice_mut(r)[off..off + v.cols()].copy_from_slice(v.row_slice(r));
                off += v.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), self.needs(parts))
    }

    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a);
        let mut out = Mat::zeros(v.rows(), end - start);
        for r in 0..v.rows() {
            out.row_slice_mut(r).copy_from_slice(&v.row_slice(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start), self.needs(&[a]))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let cols = values[0].cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for v in &values {
            assert_eq!(v.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), self.needs(parts))
    }

    pub fn slice_rows(&self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice_rows(start, end);
        self.push(value, Op::SliceRows(a, start), self.needs(&[a]))
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        let value = softmax_rows(&self.value(a));
        self.push(value, Op::SoftmaxRows(a), self.needs(&[a]))
    }

    pub fn log_softmax_rows(&self, a: Var) -> Var {
        let value = log_softmax_rows(&self.value(a));
        self.push(value, Op::LogSoftmaxRows(a), self.needs(&[a]))
    }

    /// Softmax over groups of rows sharing a segment id, independently per column.
    pub fn segment_softmax(&self, a: Var, seg: Rc<[usize]>) -> Var {
        assert_eq!(self.shape(a).0, seg.len());
        let value = segment_softmax(&self.value(a), &seg);
        self.push(value, Op::SegmentSoftmax(a, seg), self.needs(&[a]))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm_rows(&self, a: Var, eps: f64) -> Var {
        let value = layer_norm_rows(&self.value(a), eps);
        self.push(value, Op::LayerNormRows(a, eps), self.needs(&[a]))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, out: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[out.0].value.shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = vec![None; nodes.len()];
        grads[out.0] = Some(Mat::scalar(1.0));

        let acc = |grads: &mut Vec<Option<Mat>>, v: Var, g: Mat| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let val = |v: Var| -> &Mat { &nodes[v.0].value };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[a.0].needs_grad {
                        acc(&mut grads, *a, gemm(&g, false, val(*b), true));
                    }
                    if nodes[b.0].needs_grad {
                        acc(&mut grads, *b, gemm(val(*a), true, &g, false));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, reduce_to(g.clone(), val(*a).shape()));
                    acc(&mut grads, *b, reduce_to(g, val(*b).shape()));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, reduce_to(g.clone(), val(*a).shape()));
                    acc(&mut grads, *b, reduce_to(g.map(|x| -x), val(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    if nodes[a.0].needs_grad {
                        acc(&mut grads, *a, reduce_to(broadcast_zip(&g, vb, |x, y| x * y), va.shape()));
                    }
                    if nodes[b.0].needs_grad {
                        acc(&mut grads, *b, reduce_to(broadcast_zip(&g, va, |x, y| x * y), vb.shape()));
                    }
                }
                Op::Div(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    if nodes[a.0].needs_grad {
                        acc(&mut grads, *a, reduce_to(broadcast_zip(&g, vb, |x, y| x / y), va.shape()));
                    }
                    if nodes[b.0].needs_grad {
                        // d(a/b)/db = -out / b
                        let t = broadcast_zip(&g, &node.value, |x, y| x * y);
                        let gb = broadcast_zip(&t, vb, |x, y| -x / y);
                        acc(&mut grads, *b, reduce_to(gb, vb.shape()));
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, g.map(|x| x * s));
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Unary(a, kind) => {
                    let x = val(*a);
                    let y = &node.value;
                    let mut out = g;
                    for ((o, &xv), &yv) in out.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        *o *= unary_derivative(*kind, xv, yv);
                    }
                    acc(&mut grads, *a, out);
                }
                Op::SumAll(a) => {
                    let (r, c) = val(*a).shape();
                    acc(&mut grads, *a, Mat::filled(r, c, g.item()));
                }
                Op::SumRows(a) => {
                    let (r, c) = val(*a).shape();
                    let mut out = Mat::zeros(r, c);
                    for k in 0..r {
                        out.row_slice_mut(k).copy_from_slice(g.data());
                    }
                    acc(&mut grads, *a, out);
                }
                Op::SumCols(a) => {
                    let (r, c) = val(*a).shape();
                    let mut out = Mat::zeros(r, c);
                    for k in 0..r {
                        let gv = g.get(k, 0);
                        out.row_slice_mut(k).iter_mut().for_each(|x| *x = gv);
                    }
                    acc(&mut grads, *a, out);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::GatherRows(a, idx) => {
                    let n = val(*a).rows();
                    acc(&mut grads, *a, scatter_add_rows(&g, idx, n));
                }
                Op::ScatterAddRows(a, idx) => acc(&mut grads, *a, g.gather_rows(idx)),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pc = val(*p).cols();
                        if nodes[p.0].needs_grad {
                            let mut part = Mat::zeros(g.rows(), pc);
                            for r in 0..g.rows() {
                                part.row_slice_mut(r).copy_from_slice(&g.row_slice(r)[off..off + pc]);
                            }
                            acc(&mut grads, *p, part);
                        }
                        off += pc;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut out = Mat::zeros(r, c);
                    for k in 0..r {
                        out.row_slice_mut(k)[*start..*start + g.cols()].copy_from_slice(g.row_slice(k));
                    }
                    acc(&mut grads, *a, out);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pr = val(*p).rows();
                        if nodes[p.0].needs_grad {
                            acc(&mut grads, *p, g.slice_rows(off, off + pr));
                        }
                        off += pr;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut out = Mat::zeros(r, c);
                    out.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(&mut grads, *a, out);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut out = g;
                    for r in 0..out.rows() {
                        let yr = y.row_slice(r);
                        let gr = out.row_slice_mut(r);
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (o, &yv) in gr.iter_mut().zip(yr) {
                            *o = yv * (*o - dot);
                        }
                    }
                    acc(&mut grads, *a, out);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let mut out = g;
                    for r in 0..out.rows() {
                        let yr = y.row_slice(r);
                        let gr = out.row_slice_mut(r);
                        let s: f64 = gr.iter().sum();
                        for (o, &yv) in gr.iter_mut().zip(yr) {
                            *o -= yv.exp() * s;
                        }
                    }
                    acc(&mut grads, *a, out);
                }
                Op::SegmentSoftmax(a, seg) => {
                    let y = &node.value;
                    let n = segment_count(seg);
                    let cols = y.cols();
                    let mut dots = Mat::zeros(n, cols);
                    for (r, &s) in seg.iter().enumerate() {
                        for c in 0..cols {
                            dots.set(s, c, dots.get(s, c) + g.get(r, c) * y.get(r, c));
                        }
                    }
                    let mut out = g;
                    for (r, &s) in seg.iter().enumerate() {
                        for c in 0..cols {
                            out.set(r, c, y.get(r, c) * (out.get(r, c) - dots.get(s, c)));
                        }
                    }
                    acc(&mut grads, *a, out);
                }
                Op::LayerNormRows(a, eps) => {
                    let x = val(*a);
                    let y = &node.value;
                    let n = x.cols() as f64;
                    let mut out = g;
                    for r in 0..out.rows() {
                        let xr = x.row_slice(r);
                        let mean = xr.iter().sum::<f64>() / n;
                        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + eps).sqrt();
                        let yr = y.row_slice(r);
                        let gr = out.row_slice_mut(r);
                        let gm = gr.iter().sum::<f64>() / n;
                        let gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (o, &yv) in gr.iter_mut().zip(yr) {
                            *o = inv * (*o - gm - yv * gy);
                        }
                    }
                    acc(&mut grads, *a, out);
                }
            }
        }
        Gradients { grads }
    }
}
