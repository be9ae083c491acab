//! Building blocks of the dynamics core.
//!
//! Every block exists twice: as a tape function used by the rollout and the
//! objective, and as a plain function on tensors for direct use and testing.
//! Latent vectors are `[1, D]` rows; histories are `[t, D]` matrices with the
//! oldest step first.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{AttentionMode, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::nn::{self, mlp};
use crate::numerics::{Graph, ParameterSet, Rng, Tensor, Var};

/// Residual self-attention `x + Attn(x)` over a stream history.
pub fn pre_encode(g: &mut Graph<'_>, cfg: &ModelConfig, stream: &str, x: Var, mode: AttentionMode) -> Var {
    let (n, _) = g.shape(x);
    let q = nn::linear(g, &format!("{}.q", stream), x);
    let k = nn::linear(g, &format!("{}.k", stream), x);
    let v = nn::linear(g, &format!("{}.v", stream), x);
    let mask = match mode {
        AttentionMode::Causal if n > 1 => Some(g.constant(causal_mask(n))),
        _ => None,
    };
    let a = nn::attention(g, q, k, v, cfg.heads, mask);
    let o = nn::linear(g, &format!("{}.o", stream), a);
    g.add(x, o)
}

/// `[n, n]` additive mask: 0 on and below the diagonal, `-inf` above.
pub fn causal_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            m.data_mut()[i * n + j] = f64::NEG_INFINITY;
        }
    }
    m
}

/// Context summary `m_t` from pre-encoded internal and external histories.
///
/// Latent queries come from the mean of the internal history; they attend
/// over low-rank keys and values of the external history. The flattened
/// attention output is projected to a context vector `c`, and `m_t` is the
/// last internal state plus `c`.
pub fn context(g: &mut Graph<'_>, cfg: &ModelConfig, int_hist: Var, ext_hist: Var) -> Var {
    let (n_int, d) = g.shape(int_hist);
    let pooled = g.mean_rows(int_hist);
    let q = mlp(g, &cfg.query_mlp(), pooled);
    let q = g.reshape(q, cfg.queries, d);
    let k0 = nn::linear(g, "ctx.k.0", ext_hist);
    let k = nn::linear(g, "ctx.k.1", k0);
    let v0 = nn::linear(g, "ctx.v.0", ext_hist);
    let v = nn::linear(g, "ctx.v.1", v0);
    let a = nn::attention(g, q, k, v, cfg.heads, None);
    let flat = g.reshape(a, 1, cfg.queries * d);
    let c = nn::linear(g, "ctx.o", flat);
    let last = g.row(int_hist, n_int - 1);
    g.add(last, c)
}

/// `z + MLP(z)` with one tanh hidden layer.
pub fn residual_step(g: &mut Graph<'_>, cfg: &ModelConfig, name: &str, z: Var) -> Var {
    let delta = mlp(g, &cfg.residual_mlp(name), z);
    g.add(z, delta)
}

/// Mean and clamped log standard deviation of the Gaussian transition.
pub fn gaussian_head(g: &mut Graph<'_>, cfg: &ModelConfig, z: Var) -> (Var, Var) {
    let mu = residual_step(g, cfg, "f_int", z);
    let raw = nn::linear(g, "f_int.log_sigma", z);
    let log_sigma = g.clamp(raw, cfg.log_sigma_min, cfg.log_sigma_max);
    (mu, log_sigma)
}

/// `mu + eps * exp(log_sigma)` with `eps ~ N(0, I)` drawn from `rng`.
pub fn sample(g: &mut Graph<'_>, mu: Var, log_sigma: Var, rng: &mut Rng) -> Var {
    let (r, c) = g.shape(mu);
    let eps = g.constant(Tensor::matrix(r, c, (0..r * c).map(|_| rng.normal()).collect()));
    let sigma = g.exp(log_sigma);
    let noise = g.mul(eps, sigma);
    g.add(mu, noise)
}

pub fn gate(g: &mut Graph<'_>, cfg: &ModelConfig, z_ext: Var) -> Var {
    let logits = mlp(g, &cfg.residual_mlp("gate"), z_ext);
    g.sigmoid(logits)
}

/// `(1 - w) * cand + w * m` for a gate vector or a constant weight block.
pub fn blend(g: &mut Graph<'_>, cand: Var, m: Var, w: Var) -> Var {
    let keep = g.affine(w, -1.0, 1.0);
    let a = g.mul(keep, cand);
    let b = g.mul(w, m);
    g.add(a, b)
}

/// One GRU step with hidden state `h` and input `x`.
pub fn gru(g: &mut Graph<'_>, h: Var, x: Var) -> Var {
    let pre = |g: &mut Graph<'_>, gate: &str, hh: Var| {
        let a = nn::linear(g, &format!("gru.{}.x", gate), x);
        let b = nn::linear(g, &format!("gru.{}.h", gate), hh);
        g.add(a, b)
    };
    let zp = pre(g, "z", h);
    let z = g.sigmoid(zp);
    let rp = pre(g, "r", h);
    let r = g.sigmoid(rp);
    let rh = g.mul(r, h);
    let np = pre(g, "n", rh);
    let n = g.tanh(np);
    blend(g, h, n, z)
}

// ----- plain-tensor entry points -------------------------------------------

fn as_rows(t: &Tensor, d: usize, what: &str) -> Result<Tensor> {
    let rows = match t.shape() {
        [n] if *n == d => return Ok(Tensor::matrix(1, d, t.data().to_vec())),
        [r, c] if *c == d => *r,
        other => {
            return Err(Error::Shape {
                context: what.to_string(),
                expected: format!("[_, {}]", d),
                got: format!("{:?}", other),
            })
        }
    };
    if rows == 0 {
        return Err(Error::Empty("history"));
    }
    Ok(t.clone())
}

pub fn causal_pre_encode(
    params: &ParameterSet,
    cfg: &ModelConfig,
    stream: &str,
    x: &Tensor,
    mode: AttentionMode,
) -> Result<Tensor> {
    let x = as_rows(x, cfg.d, stream)?;
    let mut g = Graph::with_params(params);
    let xv = g.constant(x);
    let y = pre_encode(&mut g, cfg, stream, xv, mode);
    Ok(g.value(y).clone())
}

/// `m_t` from raw (not yet pre-encoded) histories `[t, D]`.
pub fn context_summary(
    params: &ParameterSet,
    cfg: &ModelConfig,
    int_history: &Tensor,
    ext_history: &Tensor,
    mode: AttentionMode,
) -> Result<Tensor> {
    let ih = as_rows(int_history, cfg.d, "internal history")?;
    let eh = as_rows(ext_history, cfg.d, "external history")?;
    let mut g = Graph::with_params(params);
    let (iv, ev) = (g.constant(ih), g.constant(eh));
    let pi = pre_encode(&mut g, cfg, "pre.int", iv, mode);
    let pe = pre_encode(&mut g, cfg, "pre.ext", ev, mode);
    let m = context(&mut g, cfg, pi, pe);
    Ok(g.value(m).clone())
}

/// Output of [`internal_transition`]: the candidate and, for the Gaussian
/// transition, its mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub candidate: Tensor,
    pub mu: Tensor,
    pub sigma: Option<Tensor>,
}

/// Deterministic when `rng` is `None` or the parameters have no Gaussian
/// head; otherwise samples `mu + eps * sigma`.
pub fn internal_transition(
    params: &ParameterSet,
    cfg: &ModelConfig,
    z: &Tensor,
    rng: Option<&mut Rng>,
) -> Result<Transition> {
    let z = as_rows(z, cfg.d, "internal latent")?;
    let mut g = Graph::with_params(params);
    let zv = g.constant(z);
    if params.contains("f_int.log_sigma.w") {
        let (mu, ls) = gaussian_head(&mut g, cfg, zv);
        let sigma = g.exp(ls);
        let cand = match rng {
            Some(r) => sample(&mut g, mu, ls, r),
            None => mu,
        };
        Ok(Transition {
            candidate: g.value(cand).clone(),
            mu: g.value(mu).clone(),
            sigma: Some(g.value(sigma).clone()),
        })
    } else {
        let mu = residual_step(&mut g, cfg, "f_int", zv);
        let t = g.value(mu).clone();
        Ok(Transition {
            candidate: t.clone(),
            mu: t,
            sigma: None,
        })
    }
}

pub fn external_transition(params: &ParameterSet, cfg: &ModelConfig, z: &Tensor) -> Result<Tensor> {
    let z = as_rows(z, cfg.d, "external latent")?;
    let mut g = Graph::with_params(params);
    let zv = g.constant(z);
    let y = residual_step(&mut g, cfg, "f_ext", zv);
    Ok(g.value(y).clone())
}

pub fn compute_gate(params: &ParameterSet, cfg: &ModelConfig, z_ext: &Tensor) -> Result<Tensor> {
    let z = as_rows(z_ext, cfg.d, "pooled external latent")?;
    let mut g = Graph::with_params(params);
    let zv = g.constant(z);
    let y = gate(&mut g, cfg, zv);
    Ok(g.value(y).clone())
}

/// Gated update with either a gate vector or a scalar override weight.
pub fn gated_update(cand: &Tensor, m: &Tensor, weight: GateWeight<'_>) -> Result<Tensor> {
    if cand.shape() != m.shape() {
        return Err(Error::Shape {
            context: "gated update".to_string(),
            expected: format!("{:?}", cand.shape()),
            got: format!("{:?}", m.shape()),
        });
    }
    let w: Vec<f64> = match weight {
        GateWeight::Vector(gv) => {
            if gv.len() != cand.len() {
                return Err(Error::Shape {
                    context: "gate".to_string(),
                    expected: format!("{} entries", cand.len()),
                    got: format!("{} entries", gv.len()),
                });
            }
            gv.data().to_vec()
        }
        GateWeight::Scalar(l) => alloc::vec![l; cand.len()],
    };
    let data = cand
        .data()
        .iter()
        .zip(m.data())
        .zip(&w)
        .map(|((c, mm), w)| (1.0 - w) * c + w * mm)
        .collect();
    Tensor::new(cand.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy)]
pub enum GateWeight<'a> {
    Vector(&'a Tensor),
    Scalar(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, Variant};
    use crate::topology::Topology;

    fn setup() -> (ModelConfig, ParameterSet) {
        let cfg = ModelConfig::new(8, 5, 2);
        let arch = Architecture::new(cfg.clone(), Variant::KlBottleneck, Topology::toy(5)).unwrap();
        (cfg, arch.init_params(3).unwrap())
    }

    #[test]
    fn causal_outputs_ignore_later_inputs() {
        let (cfg, ps) = setup();
        let mut rng = Rng::new(1);
        let x = Tensor::matrix(4, 8, (0..32).map(|_| rng.normal()).collect());
        let mut y = x.clone();
        for j in 0..8 {
            y.data_mut()[3 * 8 + j] += 1.0;
        }
        let a = causal_pre_encode(&ps, &cfg, "pre.int", &x, AttentionMode::Causal).unwrap();
        let b = causal_pre_encode(&ps, &cfg, "pre.int", &y, AttentionMode::Causal).unwrap();
        assert_eq!(&a.data()[..24], &b.data()[..24]);
        assert_ne!(&a.data()[24..], &b.data()[24..]);
    }

    #[test]
    fn zero_sigma_sample_is_the_mean() {
        let mut g = Graph::new();
        let mu = g.constant(Tensor::row(alloc::vec![0.25, -3.0, 1.5]));
        let ls = g.constant(Tensor::filled(&[1, 3], f64::NEG_INFINITY));
        let z = sample(&mut g, mu, ls, &mut Rng::new(4));
        assert_eq!(g.value(z), g.value(mu));
    }

    #[test]
    fn deterministic_transition_is_reproducible() {
        let (cfg, ps) = setup();
        let z = Tensor::row((0..8).map(|i| i as f64 * 0.1).collect());
        let a = internal_transition(&ps, &cfg, &z, Some(&mut Rng::new(9))).unwrap();
        let b = internal_transition(&ps, &cfg, &z, Some(&mut Rng::new(9))).unwrap();
        assert_eq!(a, b);
        let mean = internal_transition(&ps, &cfg, &z, None).unwrap();
        assert_eq!(mean.candidate, a.mu);
    }

    #[test]
    fn update_endpoints_are_exact() {
        let c = Tensor::row(alloc::vec![0.3, -1.7, 2.2]);
        let m = Tensor::row(alloc::vec![1.1, 0.4, -0.9]);
        assert_eq!(gated_update(&c, &m, GateWeight::Scalar(0.0)).unwrap(), c);
        assert_eq!(gated_update(&c, &m, GateWeight::Scalar(1.0)).unwrap(), m);
        let half = Tensor::filled(&[1, 3], 0.5);
        let mid = gated_update(&c, &m, GateWeight::Vector(&half)).unwrap();
        for i in 0..3 {
            assert_eq!(mid.data()[i], (c.data()[i] + m.data()[i]) / 2.0);
        }
    }
}
