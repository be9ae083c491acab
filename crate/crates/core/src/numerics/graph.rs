//! Reverse-mode tape over 2-D tensors.
//!
//! A [`Graph`] records every operation of one forward pass. Values are kept
//! on the tape; [`Graph::backward`] walks it in reverse and accumulates
//! gradients. Parameters are borrowed from a [`ParameterSet`] rather than
//! copied, and their gradients come back in the same layout through
//! [`Graph::param_grads`].
//!
//! All tensors on the tape are matrices. Vectors are `[1, n]` rows. Binary
//! elementwise ops accept a `[1, n]` right operand broadcast over the rows of
//! an `[m, n]` left operand.
//!
//! Shape errors inside the tape are programming errors and panic with the op
//! name; public entry points validate their inputs first.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use super::math;
use super::params::ParameterSet;
use super::tensor::{matmul_into, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Relu(Var),
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Rows(Var, usize),
    Cols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    SumCols(Var),
    Sum(Var),
    Pick(Var, usize),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'a> {
    params: Option<&'a ParameterSet>,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<'a>>,
}

/// Gradients for every node of a tape, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    assert_eq!(t.shape().len(), 2, "graph tensors are 2-D, got {:?}", t.shape());
    (t.shape()[0], t.shape()[1])
}

impl<'a> Graph<'a> {
    /// Tape with no parameter bindings; only constants.
    pub fn new() -> Self {
        Self {
            params: None,
            param_vars: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn with_params(params: &'a ParameterSet) -> Self {
        Self {
            params: Some(params),
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar() on shape {:?}", t.shape());
        t.data()[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims(self.value(v))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        dims(&t);
        self.push(t, Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        dims(t);
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a named parameter. Repeated calls return the same node.
    ///
    /// Panics if the graph has no parameter set or the name is unknown.
    pub fn param(&mut self, name: &str) -> Var {
        let params = self.params.expect("graph has no parameter set");
        let i = params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter `{}`", name));
        if let Some(v) = self.param_vars[i] {
            return v;
        }
        let entry = params.entry(i);
        dims(&entry.tensor);
        self.nodes.push(Node {
            value: Cow::Borrowed(&entry.tensor),
            op: Op::Leaf,
            requires_grad: entry.trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[i] = Some(v);
        v
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.map(|p| p.contains(name)).unwrap_or(false)
    }

    // ----- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul [{},{}]x[{},{}]", n, k, k2, m);
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(n, m, out), Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t [{},{}]x[{},{}]ᵀ", n, k, m, k2);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let ar = &ad[i * k..(i + 1) * k];
            for j in 0..m {
                let br = &bd[j * k..(j + 1) * k];
                out[i * m + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(n, m, out), Op::MatMulT(a, b), rg)
    }

    // ----- elementwise binary ---------------------------------------------

    fn broadcast_binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, name: &str) -> Tensor {
        let (n, m) = self.shape(a);
        let (bn, bm) = self.shape(b);
        assert!(
            bm == m && (bn == n || bn == 1),
            "{} [{},{}] with [{},{}]",
            name,
            n,
            m,
            bn,
            bm
        );
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let br = if bn == 1 { 0 } else { i };
            for j in 0..m {
                out.push(f(ad[i * m + j], bd[br * m + j]));
            }
        }
        Tensor::matrix(n, m, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.broadcast_binary(a, b, |x, y| x + y, "add");
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.broadcast_binary(a, b, |x, y| x - y, "sub");
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.broadcast_binary(a, b, |x, y| x * y, "mul");
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Mul(a, b), rg)
    }

    // ----- elementwise unary ----------------------------------------------

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    /// `alpha * a + beta`.
    pub fn affine(&mut self, a: Var, alpha: f64, beta: f64) -> Var {
        self.unary(a, Op::Affine(a, alpha), |x| alpha * x + beta)
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        self.affine(a, alpha, 0.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), math::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), math::sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), math::exp)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    /// Square root; the derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), math::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    // ----- row-wise normalizers -------------------------------------------

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let d = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &d[i * m..(i + 1) * m];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..m {
                let e = math::exp(row[j] - mx);
                out[i * m + j] = e;
                s += e;
            }
            for j in 0..m {
                out[i * m + j] /= s;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(n, m, out), Op::SoftmaxRows(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let d = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &d[i * m..(i + 1) * m];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|x| math::exp(x - mx)).sum();
            let lse = mx + math::ln(s);
            for j in 0..m {
                out[i * m + j] = row[j] - lse;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(n, m, out), Op::LogSoftmaxRows(a), rg)
    }

    // ----- structure ------------------------------------------------------

    /// Rows `[start, start + count)`.
    pub fn rows(&mut self, a: Var, start: usize, count: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + count <= n, "rows {}..{} of {}", start, start + count, n);
        let d = &self.value(a).data()[start * m..(start + count) * m];
        let t = Tensor::matrix(count, m, d.to_vec());
        let rg = self.rg(a);
        self.push(t, Op::Rows(a, start), rg)
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        self.rows(a, i, 1)
    }

    /// Columns `[start, start + count)`.
    pub fn cols(&mut self, a: Var, start: usize, count: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + count <= m, "cols {}..{} of {}", start, start + count, m);
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(n * count);
        for i in 0..n {
            out.extend_from_slice(&d[i * m + start..i * m + start + count]);
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(n, count, out), Op::Cols(a, start), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let m = self.shape(parts[0]).1;
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (pn, pm) = self.shape(p);
            assert_eq!(pm, m, "concat_rows column mismatch");
            out.extend_from_slice(self.value(p).data());
            n += pn;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(n, m, out), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let n = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pn, pm) = self.shape(p);
                assert_eq!(pn, n, "concat_cols row mismatch");
                pm
            })
            .collect();
        let m: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(n, m, out), Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), rows * cols, "reshape {:?} to [{},{}]", t.shape(), rows, cols);
        let t = Tensor::matrix(rows, cols, t.data().to_vec());
        let rg = self.rg(a);
        self.push(t, Op::Reshape(a), rg)
    }

    /// Mean over rows: `[n, m] -> [1, m]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let d = self.value(a).data();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                out[j] += d[i * m + j];
            }
        }
        for x in &mut out {
            *x /= n as f64;
        }
        let rg = self.rg(a);
        self.push(Tensor::row(out), Op::MeanRows(a), rg)
    }

    /// Sum over columns: `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let d = self.value(a).data();
        let out = (0..n).map(|i| d[i * m..(i + 1) * m].iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Tensor::matrix(n, 1, out), Op::SumCols(a), rg)
    }

    /// Sum of all elements: `[1, 1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Element at flat index as a `[1, 1]` node.
    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let x = self.value(a).data()[index];
        let rg = self.rg(a);
        self.push(Tensor::scalar(x), Op::Pick(a, index), rg)
    }

    /// Sum of a list of scalar nodes, left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        assert!(!terms.is_empty());
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }

    // ----- backward -------------------------------------------------------

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        assert_eq!(self.value(loss).len(), 1, "backward from non-scalar");
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradient of a broadcast right operand: sums over rows when `b` is `[1, m]`.
    fn reduce_to(&self, b: Var, g: Tensor) -> Tensor {
        let (bn, bm) = self.shape(b);
        let (gn, gm) = dims(&g);
        if bn == gn {
            return g;
        }
        debug_assert_eq!(bm, gm);
        let mut out = vec![0.0; bm];
        for row in g.data().chunks_exact(gm).take(gn) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Tensor::row(out)
    }

    fn propagate(&self, op: &Op, y: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (n, k) = dims(av);
                let m = bv.cols();
                if self.rg(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += g.data()[i * m + j] * bv.data()[p * m + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    self.accumulate(grads, *a, Tensor::matrix(n, k, da));
                }
                if self.rg(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        for p in 0..k {
                            let aip = av.data()[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let grow = &g.data()[i * m..(i + 1) * m];
                            let drow = &mut db[p * m..(p + 1) * m];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += aip * gv;
                            }
                        }
                    }
                    self.accumulate(grads, *b, Tensor::matrix(k, m, db));
                }
            }
            Op::MatMulT(a, b) => {
                // y = A Bᵀ, A [n,k], B [m,k]
                let av = self.value(*a);
                let bv = self.value(*b);
                let (n, k) = dims(av);
                let m = bv.rows();
                if self.rg(*a) {
                    let mut da = vec![0.0; n * k];
                    matmul_into(g.data(), bv.data(), &mut da, n, m, k);
                    self.accumulate(grads, *a, Tensor::matrix(n, k, da));
                }
                if self.rg(*b) {
                    // dB = Gᵀ A
                    let mut db = vec![0.0; m * k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g.data()[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                db[j * k + p] += gij * av.data()[i * k + p];
                            }
                        }
                    }
                    self.accumulate(grads, *b, Tensor::matrix(m, k, db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    let gb = self.reduce_to(*b, g.clone());
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    let gb = self.reduce_to(*b, g.map(|x| -x));
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (n, m) = dims(av);
                let bn = bv.rows();
                let bat = |i: usize, j: usize| bv.data()[if bn == 1 { j } else { i * m + j }];
                if self.rg(*a) {
                    let mut da = Vec::with_capacity(n * m);
                    for i in 0..n {
                        for j in 0..m {
                            da.push(g.data()[i * m + j] * bat(i, j));
                        }
                    }
                    self.accumulate(grads, *a, Tensor::matrix(n, m, da));
                }
                if self.rg(*b) {
                    let full: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(gv, x)| gv * x)
                        .collect();
                    let gb = self.reduce_to(*b, Tensor::matrix(n, m, full));
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Affine(a, alpha) => {
                let alpha = *alpha;
                self.accumulate(grads, *a, g.map(|x| alpha * x));
            }
            Op::Tanh(a) => {
                let d = zip_map(g, y, |gv, yv| gv * (1.0 - yv * yv));
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = zip_map(g, y, |gv, yv| gv * yv * (1.0 - yv));
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => {
                let d = zip_map(g, y, |gv, yv| gv * yv);
                self.accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = zip_map(g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Abs(a) => {
                let d = zip_map(g, self.value(*a), |gv, x| {
                    if x > 0.0 {
                        gv
                    } else if x < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::Sqrt(a) => {
                let d = zip_map(g, y, |gv, yv| if yv > 0.0 { gv / (2.0 * yv) } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Square(a) => {
                let d = zip_map(g, self.value(*a), |gv, x| 2.0 * gv * x);
                self.accumulate(grads, *a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let d = zip_map(g, self.value(*a), |gv, x| if x >= lo && x <= hi { gv } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let (n, m) = dims(y);
                let mut d = vec![0.0; n * m];
                for i in 0..n {
                    let yr = &y.data()[i * m..(i + 1) * m];
                    let gr = &g.data()[i * m..(i + 1) * m];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        d[i * m + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::matrix(n, m, d));
            }
            Op::LogSoftmaxRows(a) => {
                let (n, m) = dims(y);
                let mut d = vec![0.0; n * m];
                for i in 0..n {
                    let yr = &y.data()[i * m..(i + 1) * m];
                    let gr = &g.data()[i * m..(i + 1) * m];
                    let gs: f64 = gr.iter().sum();
                    for j in 0..m {
                        d[i * m + j] = gr[j] - math::exp(yr[j]) * gs;
                    }
                }
                self.accumulate(grads, *a, Tensor::matrix(n, m, d));
            }
            Op::Rows(a, start) => {
                let (n, m) = self.shape(*a);
                let mut d = vec![0.0; n * m];
                d[start * m..start * m + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, Tensor::matrix(n, m, d));
            }
            Op::Cols(a, start) => {
                let (n, m) = self.shape(*a);
                let w = g.cols();
                let mut d = vec![0.0; n * m];
                for i in 0..n {
                    d[i * m + start..i * m + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                self.accumulate(grads, *a, Tensor::matrix(n, m, d));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (pn, pm) = self.shape(p);
                    let seg = g.data()[offset..offset + pn * pm].to_vec();
                    offset += pn * pm;
                    self.accumulate(grads, p, Tensor::matrix(pn, pm, seg));
                }
            }
            Op::ConcatCols(parts) => {
                let (n, m) = dims(g);
                let mut col = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    let mut seg = Vec::with_capacity(n * w);
                    for i in 0..n {
                        seg.extend_from_slice(&g.data()[i * m + col..i * m + col + w]);
                    }
                    col += w;
                    self.accumulate(grads, p, Tensor::matrix(n, w, seg));
                }
            }
            Op::Reshape(a) => {
                let (n, m) = self.shape(*a);
                self.accumulate(grads, *a, Tensor::matrix(n, m, g.data().to_vec()));
            }
            Op::MeanRows(a) => {
                let (n, m) = self.shape(*a);
                let inv = 1.0 / n as f64;
                let mut d = Vec::with_capacity(n * m);
                for _ in 0..n {
                    d.extend(g.data().iter().map(|x| x * inv));
                }
                self.accumulate(grads, *a, Tensor::matrix(n, m, d));
            }
            Op::SumCols(a) => {
                let (n, m) = self.shape(*a);
                let mut d = Vec::with_capacity(n * m);
                for i in 0..n {
                    d.extend(core::iter::repeat_n(g.data()[i], m));
                }
                self.accumulate(grads, *a, Tensor::matrix(n, m, d));
            }
            Op::Sum(a) => {
                let (n, m) = self.shape(*a);
                self.accumulate(grads, *a, Tensor::filled(&[n, m], g.data()[0]));
            }
            Op::Pick(a, index) => {
                let (n, m) = self.shape(*a);
                let mut d = Tensor::zeros(&[n, m]);
                d.data_mut()[*index] = g.data()[0];
                self.accumulate(grads, *a, d);
            }
        }
    }

    /// Gradients for every bound parameter, in the parameter set's layout.
    /// Parameters the tape never touched get zero tensors.
    pub fn param_grads(&self, grads: &Gradients) -> ParameterSet {
        let params = self.params.expect("graph has no parameter set");
        let mut out = params.zeros_like();
        for (i, slot) in self.param_vars.iter().enumerate() {
            if let Some(v) = slot {
                if let Some(g) = grads.get(*v) {
                    out.entry_mut(i).tensor.data_mut().copy_from_slice(g.data());
                }
            }
        }
        out
    }
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn zip_map(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(other.data()).map(|(a, b)| f(*a, *b)).collect();
    Tensor::new(g.shape().to_vec(), data).expect("same shape")
}
