//! Closed-loop rollout.
//!
//! The observed window is copied from the ground-truth latents. For every
//! later step the model advances the pooled external latent with `f_ext`,
//! summarizes the internal and external histories up to the current step into
//! `m_t`, proposes `f_int(ẑ_t)`, and blends the two under the gate computed
//! from the current external latent. Histories are rebuilt from the copied
//! prefix and the model's own predictions only, so no ground-truth value past
//! the observed window ever enters the computation.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::dynamics::{self, blend, context, gate, gaussian_head, gru, pre_encode, residual_step};
use super::heads::{self, HEADS};
use super::{Architecture, Coupling};
use crate::data::Clip;
use crate::error::{Error, Result};
use crate::latent;
use crate::numerics::{nn, Graph, ParameterSet, Rng, Tensor, Var};

/// Raw features fed to a rollout, before view embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutInput {
    /// `[T, D]` in-cabin features.
    pub internal: Tensor,
    /// `(view id, [T, D] features)` for each external view; ids start at 1.
    pub external: Vec<(usize, Tensor)>,
    /// Replace pooled external latents by zero vectors.
    pub external_zeroed: bool,
    pub t_obs: usize,
}

impl RolloutInput {
    pub fn from_clip(clip: &Clip) -> Self {
        Self {
            internal: clip.internal(),
            external: (0..clip.v()).map(|v| (v + 1, clip.external_view(v))).collect(),
            external_zeroed: false,
            t_obs: clip.t_obs,
        }
    }

    pub fn t(&self) -> usize {
        self.internal.rows()
    }

    pub fn t_pred(&self) -> usize {
        self.t() - self.t_obs
    }

    fn validate(&self, d: usize, v: usize) -> Result<()> {
        let t = self.t();
        let shape_err = |what: &str, got: &[usize]| Error::Shape {
            context: what.to_string(),
            expected: format!("[{}, {}]", t, d),
            got: format!("{:?}", got),
        };
        if self.internal.shape().len() != 2 || self.internal.cols() != d {
            return Err(shape_err("internal features", self.internal.shape()));
        }
        if self.t_obs == 0 || self.t_obs > t {
            return Err(Error::InvalidConfig(format!("need 1 <= T_obs <= T, got {} and {}", self.t_obs, t)));
        }
        if self.external.is_empty() {
            return Err(Error::Empty("external views"));
        }
        let mut seen = vec![false; v + 1];
        for (id, f) in &self.external {
            if *id == 0 || *id > v || seen[*id] {
                return Err(Error::UnknownView(*id));
            }
            seen[*id] = true;
            if f.shape() != [t, d] {
                return Err(shape_err("external features", f.shape()));
            }
        }
        Ok(())
    }
}

/// How the internal update weighs the candidate against the context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Injection {
    Learned,
    /// Every gate entry fixed to `c`.
    Clamp(f64),
    /// Scalar weight `λ` replacing the gate.
    Override(f64),
}

/// Which external values the context summary may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryAccess {
    /// Observed prefix plus the model's own predictions.
    Truncated,
    /// The full ground-truth sequence, future included. Leaks by design; for
    /// exercising the lookahead verifier only.
    FullSequence,
}

pub struct RolloutOptions<'r> {
    pub injection: Injection,
    pub history: HistoryAccess,
    /// Draws the Gaussian transition noise; `None` uses the mean.
    pub rng: Option<&'r mut Rng>,
}

impl Default for RolloutOptions<'_> {
    fn default() -> Self {
        Self {
            injection: Injection::Learned,
            history: HistoryAccess::Truncated,
            rng: None,
        }
    }
}

impl RolloutOptions<'_> {
    pub fn with_injection(injection: Injection) -> Self {
        Self {
            injection,
            ..Self::default()
        }
    }
}

/// Tape handles of one rollout.
pub struct RolloutVars {
    /// `[T_obs, D]` copied internal latents.
    pub observed_int: Var,
    /// `[T_obs, D]` copied pooled external latents.
    pub observed_ext: Var,
    pub pred_int: Vec<Var>,
    pub pred_ext: Vec<Var>,
    pub context: Vec<Var>,
    pub gates: Vec<Var>,
    pub candidates: Vec<Var>,
    pub mu: Vec<Var>,
    pub log_sigma: Vec<Var>,
    /// `[T_pred, 2K]` decoded skeletons.
    pub skeleton: Option<Var>,
    /// Logits in [`HEADS`] order.
    pub logits: [Var; 4],
    /// `[T_pred, D]` ground-truth internal latents of the future window; read
    /// by the objective only.
    pub target_int: Option<Var>,
}

/// Plain-value record of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub t_obs: usize,
    /// `[T, D]` internal latents: copied prefix, then predictions.
    pub z_int: Tensor,
    /// `[T, D]` pooled external latents, when the variant rolls them out.
    pub z_ext: Option<Tensor>,
    /// Per predicted step, `[T_pred, D]`.
    pub context: Option<Tensor>,
    pub gates: Option<Tensor>,
    pub candidates: Option<Tensor>,
    pub mu: Option<Tensor>,
    pub sigma: Option<Tensor>,
    pub skeleton: Option<Tensor>,
    pub logits: [Tensor; 4],
    pub bidirectional: bool,
    pub injection: Injection,
}

impl RolloutTrace {
    pub fn t_pred(&self) -> usize {
        self.z_int.rows() - self.t_obs
    }

    /// Predicted labels (argmax, first index on ties) in [`HEADS`] order.
    pub fn labels(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for (o, l) in out.iter_mut().zip(&self.logits) {
            *o = argmax(l.data());
        }
        out
    }

    /// Largest absolute difference over every tensor of two traces.
    pub fn max_abs_diff(&self, other: &RolloutTrace) -> f64 {
        let pair = |a: &Option<Tensor>, b: &Option<Tensor>| match (a, b) {
            (Some(a), Some(b)) => a.max_abs_diff(b),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let mut m = self.z_int.max_abs_diff(&other.z_int);
        for (a, b) in [
            (&self.z_ext, &other.z_ext),
            (&self.context, &other.context),
            (&self.gates, &other.gates),
            (&self.candidates, &other.candidates),
            (&self.mu, &other.mu),
            (&self.sigma, &other.sigma),
            (&self.skeleton, &other.skeleton),
        ] {
            m = m.max(pair(a, b));
        }
        m
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn stack(g: &Graph<'_>, vars: &[Var]) -> Option<Tensor> {
    if vars.is_empty() {
        return None;
    }
    let cols = g.shape(vars[0]).1;
    let mut data = Vec::with_capacity(vars.len() * cols);
    for &v in vars {
        data.extend_from_slice(g.value(v).data());
    }
    Some(Tensor::matrix(vars.len(), cols, data))
}

impl Architecture {
    /// Pooled external latents of rows `[start, start + len)`.
    fn pooled_external(&self, g: &mut Graph<'_>, input: &RolloutInput, zeroed: bool, start: usize, len: usize) -> Var {
        if zeroed {
            return g.constant(Tensor::zeros(&[len, self.config.d]));
        }
        let mut views = Vec::with_capacity(input.external.len());
        for (id, f) in &input.external {
            let raw = g.constant(Tensor::matrix(len, self.config.d, f.data()[start * self.config.d..(start + len) * self.config.d].to_vec()));
            views.push(latent::embed(g, raw, *id));
        }
        latent::pool(g, &views)
    }

    fn internal_rows(&self, g: &mut Graph<'_>, input: &RolloutInput, start: usize, len: usize) -> Var {
        let d = self.config.d;
        let raw = g.constant(Tensor::matrix(len, d, input.internal.data()[start * d..(start + len) * d].to_vec()));
        latent::embed(g, raw, latent::INTERNAL_VIEW)
    }

    /// Records a full rollout of `input` on `g`.
    pub fn forward(&self, g: &mut Graph<'_>, input: &RolloutInput, opts: &mut RolloutOptions<'_>) -> Result<RolloutVars> {
        let cfg = &self.config;
        input.validate(cfg.d, cfg.v)?;
        let coupling = self.variant.coupling();
        if opts.injection != Injection::Learned && coupling != Coupling::Gated {
            return Err(Error::NoInjectionPathway {
                variant: self.variant.name().into(),
                intervention: format!("{:?}", opts.injection),
            });
        }
        let (t_len, t_obs) = (input.t(), input.t_obs);
        let t_pred = t_len - t_obs;
        let zeroed = input.external_zeroed || self.variant.severs_external();
        let mode = self.variant.attention_mode();

        let observed_int = self.internal_rows(g, input, 0, t_obs);
        let observed_ext = self.pooled_external(g, input, zeroed, 0, t_obs);
        let leaked_ext = match opts.history {
            HistoryAccess::FullSequence => Some(self.pooled_external(g, input, zeroed, 0, t_len)),
            HistoryAccess::Truncated => None,
        };

        let mut pred_int = Vec::with_capacity(t_pred);
        let mut pred_ext = Vec::with_capacity(t_pred);
        let mut ctx = Vec::new();
        let mut gates = Vec::new();
        let mut candidates = Vec::new();
        let mut mus = Vec::new();
        let mut log_sigmas = Vec::new();
        let mut z_int = g.row(observed_int, t_obs - 1);
        let mut z_ext = g.row(observed_ext, t_obs - 1);

        if coupling == Coupling::Static {
            if t_pred > 0 {
                let mean_int = g.mean_rows(observed_int);
                let mean_ext = g.mean_rows(observed_ext);
                let fused = nn::linear(g, "static.fuse", mean_ext);
                let z = g.add(mean_int, fused);
                pred_int = vec![z; t_pred];
            }
        } else {
            for _ in 0..t_pred {
                let uses_ext = !matches!(coupling, Coupling::Independent);
                let next_ext = if uses_ext {
                    Some(residual_step(g, cfg, "f_ext", z_ext))
                } else {
                    None
                };
                let m = if self.variant.uses_context() {
                    let mut ip = vec![observed_int];
                    ip.extend_from_slice(&pred_int);
                    let int_hist = g.concat_rows(&ip);
                    let ext_hist = match leaked_ext {
                        Some(full) => full,
                        None => {
                            let mut ep = vec![observed_ext];
                            ep.extend_from_slice(&pred_ext);
                            g.concat_rows(&ep)
                        }
                    };
                    let pi = pre_encode(g, cfg, "pre.int", int_hist, mode);
                    let pe = pre_encode(g, cfg, "pre.ext", ext_hist, mode);
                    let m = context(g, cfg, pi, pe);
                    ctx.push(m);
                    Some(m)
                } else {
                    None
                };
                let cand = if coupling == Coupling::Gru {
                    gru(g, z_int, m.expect("context"))
                } else if self.variant.gaussian() {
                    let (mu, ls) = gaussian_head(g, cfg, z_int);
                    mus.push(mu);
                    log_sigmas.push(ls);
                    match opts.rng.as_deref_mut() {
                        Some(r) => dynamics::sample(g, mu, ls, r),
                        None => mu,
                    }
                } else {
                    residual_step(g, cfg, "f_int", z_int)
                };
                candidates.push(cand);
                let next_int = match coupling {
                    Coupling::Gated => {
                        let m = m.expect("context");
                        let w = match opts.injection {
                            Injection::Learned => {
                                let gv = gate(g, cfg, z_ext);
                                gates.push(gv);
                                gv
                            }
                            Injection::Clamp(c) | Injection::Override(c) => g.constant(Tensor::filled(&[1, cfg.d], c)),
                        };
                        blend(g, cand, m, w)
                    }
                    Coupling::Additive => g.add(cand, m.expect("context")),
                    _ => cand,
                };
                pred_int.push(next_int);
                z_int = next_int;
                if let Some(e) = next_ext {
                    pred_ext.push(e);
                    z_ext = e;
                }
            }
        }

        let skeleton = if self.variant.has_pose_head() && t_pred > 0 {
            let y = if coupling == Coupling::Static {
                let one = heads::decode(g, &self.adjacency, cfg.k, cfg.channels, pred_int[0]);
                g.concat_rows(&vec![one; t_pred])
            } else {
                let zi = g.concat_rows(&pred_int);
                let z = if coupling == Coupling::LateFusion {
                    let ze = g.concat_rows(&pred_ext);
                    g.concat_cols(&[zi, ze])
                } else {
                    zi
                };
                heads::decode(g, &self.adjacency, cfg.k, cfg.channels, z)
            };
            Some(y)
        } else {
            None
        };

        let z_last = pred_int.last().copied().unwrap_or(z_int);
        let ext_last = if coupling == Coupling::Independent {
            g.constant(Tensor::zeros(&[1, cfg.d]))
        } else {
            self.pooled_external(g, input, zeroed, t_len - 1, 1)
        };
        let mut logits = [z_last; 4];
        for (i, (name, _)) in HEADS.iter().enumerate() {
            let src = if i < 2 { z_last } else { ext_last };
            logits[i] = heads::classify(g, name, src);
        }
        let target_int = if t_pred > 0 {
            Some(self.internal_rows(g, input, t_obs, t_pred))
        } else {
            None
        };
        Ok(RolloutVars {
            observed_int,
            observed_ext,
            pred_int,
            pred_ext,
            context: ctx,
            gates,
            candidates,
            mu: mus,
            log_sigma: log_sigmas,
            skeleton,
            logits,
            target_int,
        })
    }

    /// Evaluation-mode rollout (mean transitions) returning plain values.
    pub fn rollout(&self, params: &ParameterSet, input: &RolloutInput, injection: Injection, history: HistoryAccess) -> Result<RolloutTrace> {
        let mut g = Graph::with_params(params);
        let mut opts = RolloutOptions {
            injection,
            history,
            rng: None,
        };
        let vars = self.forward(&mut g, input, &mut opts)?;
        Ok(self.trace(&g, &vars, input.t_obs, injection))
    }

    pub fn trace(&self, g: &Graph<'_>, vars: &RolloutVars, t_obs: usize, injection: Injection) -> RolloutTrace {
        let mut z_int = g.value(vars.observed_int).clone().into_data();
        for &v in &vars.pred_int {
            z_int.extend_from_slice(g.value(v).data());
        }
        let d = self.config.d;
        let z_int = Tensor::matrix(z_int.len() / d, d, z_int);
        let z_ext = if vars.pred_ext.is_empty() && !vars.pred_int.is_empty() {
            None
        } else {
            let mut z = g.value(vars.observed_ext).clone().into_data();
            for &v in &vars.pred_ext {
                z.extend_from_slice(g.value(v).data());
            }
            Some(Tensor::matrix(z.len() / d, d, z))
        };
        let sigma = stack(g, &vars.log_sigma).map(|t| t.map(crate::numerics::math::exp));
        RolloutTrace {
            t_obs,
            z_int,
            z_ext,
            context: stack(g, &vars.context),
            gates: stack(g, &vars.gates),
            candidates: stack(g, &vars.candidates),
            mu: stack(g, &vars.mu),
            sigma,
            skeleton: vars.skeleton.map(|s| g.value(s).clone()),
            logits: vars.logits.map(|l| g.value(l).clone()),
            bidirectional: self.variant.attention_mode() == super::AttentionMode::Bidirectional,
            injection,
        }
    }
}
