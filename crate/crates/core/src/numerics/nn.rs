//! Linear layers, MLPs and multi-head scaled dot-product attention.
//!
//! Parameters follow a flat naming scheme: a linear layer named `p` owns
//! `p.w` (`[in, out]`) and `p.b` (`[1, out]`); layer `i` of an MLP named `p`
//! is the linear layer `p.{i}`. Inputs are row-major `[n, in]` batches.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::math;
use super::params::ParameterSet;
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, g: &mut Graph<'_>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// Layer widths `[in, h1, ..., out]` plus activations.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub name: String,
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(name: &str, sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        Self {
            name: name.to_string(),
            sizes: sizes.to_vec(),
            hidden,
            output,
        }
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn layer_name(&self, i: usize) -> String {
        format!("{}.{}", self.name, i)
    }
}

/// Uniform `[-1/√fan_in, 1/√fan_in]` weights and biases.
pub fn init_linear(ps: &mut ParameterSet, rng: &mut Rng, name: &str, fan_in: usize, fan_out: usize) -> Result<()> {
    let bound = 1.0 / math::sqrt(fan_in as f64);
    let w = (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
    let b = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
    ps.insert(&format!("{}.w", name), Tensor::matrix(fan_in, fan_out, w), true)?;
    ps.insert(&format!("{}.b", name), Tensor::row(b), true)
}

pub fn init_mlp(ps: &mut ParameterSet, rng: &mut Rng, spec: &MlpSpec) -> Result<()> {
    for i in 0..spec.layers() {
        init_linear(ps, rng, &spec.layer_name(i), spec.sizes[i], spec.sizes[i + 1])?;
    }
    Ok(())
}

pub fn linear(g: &mut Graph<'_>, name: &str, x: Var) -> Var {
    let w = g.param(&format!("{}.w", name));
    let b = g.param(&format!("{}.b", name));
    let xw = g.matmul(x, w);
    g.add(xw, b)
}

pub fn mlp(g: &mut Graph<'_>, spec: &MlpSpec, x: Var) -> Var {
    let mut h = x;
    for i in 0..spec.layers() {
        h = linear(g, &spec.layer_name(i), h);
        let act = if i + 1 == spec.layers() { spec.output } else { spec.hidden };
        h = act.apply(g, h);
    }
    h
}

fn dims_string(shape: &[usize]) -> String {
    format!("{:?}", shape)
}

/// Checks that every layer of `spec` exists in `params` with consistent shapes.
pub fn check_mlp(params: &ParameterSet, spec: &MlpSpec) -> Result<()> {
    for i in 0..spec.layers() {
        let name = spec.layer_name(i);
        let (fi, fo) = (spec.sizes[i], spec.sizes[i + 1]);
        let w = params.require(&format!("{}.w", name))?;
        if w.shape() != [fi, fo] {
            return Err(Error::Shape {
                context: format!("{}.w", name),
                expected: dims_string(&[fi, fo]),
                got: dims_string(w.shape()),
            });
        }
        let b = params.require(&format!("{}.b", name))?;
        if b.shape() != [1, fo] {
            return Err(Error::Shape {
                context: format!("{}.b", name),
                expected: dims_string(&[1, fo]),
                got: dims_string(b.shape()),
            });
        }
    }
    Ok(())
}

/// Evaluates an MLP on a `[n, in]` batch (or a single `[in]` vector).
pub fn mlp_forward(params: &ParameterSet, x: &Tensor, spec: &MlpSpec) -> Result<Tensor> {
    let x2 = match x.shape() {
        [n] => Tensor::matrix(1, *n, x.data().to_vec()),
        [_, _] => x.clone(),
        other => {
            return Err(Error::Shape {
                context: spec.layer_name(0),
                expected: "rank 1 or 2 input".to_string(),
                got: dims_string(other),
            })
        }
    };
    if x2.cols() != spec.sizes[0] {
        return Err(Error::Shape {
            context: spec.layer_name(0),
            expected: format!("input width {}", spec.sizes[0]),
            got: format!("input width {}", x2.cols()),
        });
    }
    check_mlp(params, spec)?;
    let mut g = Graph::with_params(params);
    let xv = g.constant(x2);
    let y = mlp(&mut g, spec, xv);
    let out = g.value(y).clone();
    if x.shape().len() == 1 {
        out.reshaped(&[spec.sizes[spec.layers()]])
    } else {
        Ok(out)
    }
}

/// Multi-head attention on the tape. `mask`, when given, is an `[nq, nk]`
/// additive bias (use `-inf` to forbid a key) shared by all heads.
pub fn attention(g: &mut Graph<'_>, q: Var, k: Var, v: Var, heads: usize, mask: Option<Var>) -> Var {
    let (_, d) = g.shape(q);
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.cols(q, h * dh, dh);
        let kh = g.cols(k, h * dh, dh);
        let vh = g.cols(v, h * dh, dh);
        let s = g.matmul_t(qh, kh);
        let mut s = g.scale(s, scale);
        if let Some(m) = mask {
            s = g.add(s, m);
        }
        let p = g.softmax_rows(s);
        outs.push(g.matmul(p, vh));
    }
    if heads == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)
    }
}

fn check_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<()> {
    let mat = |t: &Tensor, what: &str| -> Result<(usize, usize)> {
        match t.shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Shape {
                context: format!("attention {}", what),
                expected: "rank 2".to_string(),
                got: dims_string(other),
            }),
        }
    };
    let (_, dq) = mat(q, "queries")?;
    let (nk, dk) = mat(k, "keys")?;
    let (nv, dv) = mat(v, "values")?;
    if nk == 0 {
        return Err(Error::EmptyKeySet);
    }
    if heads == 0 || dq % heads != 0 {
        return Err(Error::Shape {
            context: "attention heads".to_string(),
            expected: format!("width divisible by {} heads", heads),
            got: format!("width {}", dq),
        });
    }
    if dk != dq || dv != dq || nv != nk {
        return Err(Error::Shape {
            context: "attention keys/values".to_string(),
            expected: format!("[{}, {}] keys and values", nk, dq),
            got: format!("keys {:?}, values {:?}", k.shape(), v.shape()),
        });
    }
    Ok(())
}

/// Multi-head scaled dot-product attention: `q [nq, d]`, `k, v [nk, d]`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    check_attention(q, k, v, heads)?;
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let out = attention(&mut g, qv, kv, vv, heads, None);
    Ok(g.value(out).clone())
}

/// Per-head attention weight matrices `[nq, nk]`.
pub fn attention_weights(q: &Tensor, k: &Tensor, heads: usize) -> Result<Vec<Tensor>> {
    check_attention(q, k, k, heads)?;
    let dh = q.cols() / heads;
    let mut g = Graph::new();
    let (qv, kv) = (g.constant(q.clone()), g.constant(k.clone()));
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.cols(qv, h * dh, dh);
        let kh = g.cols(kv, h * dh, dh);
        let s = g.matmul_t(qh, kh);
        let s = g.scale(s, 1.0 / math::sqrt(dh as f64));
        let p = g.softmax_rows(s);
        out.push(g.value(p).clone());
    }
    Ok(out)
}
