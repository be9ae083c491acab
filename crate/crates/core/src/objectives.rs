//! Loss terms and the total objective.
//!
//! Skeleton tensors are `[Tf, 2K]` (frame-major, then joint, then x/y), masks
//! are `[Tf, K]`, latents are `[Tf, D]`. Every term reads the future window
//! only. The tape versions are what training differentiates; the plain
//! versions evaluate the same tape code on constants.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{Clip, LABEL_CLASSES, LABEL_NAMES};
use crate::error::{Error, Result};
use crate::model::{Architecture, RolloutInput, RolloutOptions, RolloutVars};
use crate::numerics::{Graph, Objective, Tensor, Var};

pub const MASK_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub latent: f64,
    pub skeleton: f64,
    pub aux: f64,
    pub phys: f64,
    pub bone: f64,
    pub smooth: f64,
    pub seat: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            latent: 1.0,
            skeleton: 1.0,
            aux: 1.0,
            phys: 0.0,
            bone: 0.1,
            smooth: 0.1,
            seat: 0.01,
            kl: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.latent,
            self.skeleton,
            self.aux,
            self.phys,
            self.bone,
            self.smooth,
            self.seat,
            self.kl,
        ];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and nonnegative: {:?}", self)));
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Self {
            latent: 0.0,
            skeleton: 0.0,
            aux: 0.0,
            phys: 0.0,
            bone: 0.0,
            smooth: 0.0,
            seat: 0.0,
            kl: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatentMode {
    #[default]
    Direct,
    Velocity,
}

/// Axis-aligned region on normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Roi {
    fn default() -> Self {
        Self {
            x_min: 0.02,
            x_max: 0.98,
            y_min: 0.02,
            y_max: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub latent: f64,
    pub skeleton: f64,
    pub aux: f64,
    pub bone: f64,
    pub smooth: f64,
    pub seat: f64,
    pub kl: f64,
    pub total: f64,
    /// The window was too short for some smoothness differences.
    pub smooth_degenerate: bool,
}

impl LossBreakdown {
    pub const TERMS: [&'static str; 7] = ["latent", "skeleton", "aux", "bone", "smooth", "seat", "kl"];

    pub fn get(&self, term: &str) -> f64 {
        match term {
            "latent" => self.latent,
            "skeleton" => self.skeleton,
            "aux" => self.aux,
            "bone" => self.bone,
            "smooth" => self.smooth,
            "seat" => self.seat,
            "kl" => self.kl,
            "total" => self.total,
            _ => f64::NAN,
        }
    }

    fn set(&mut self, term: &str, x: f64) {
        match term {
            "latent" => self.latent = x,
            "skeleton" => self.skeleton = x,
            "aux" => self.aux = x,
            "bone" => self.bone = x,
            "smooth" => self.smooth = x,
            "seat" => self.seat = x,
            "kl" => self.kl = x,
            _ => {}
        }
    }

    pub fn from_terms(terms: &[(&str, f64)], total: f64) -> Self {
        let mut b = Self {
            total,
            ..Self::default()
        };
        for &(n, x) in terms {
            b.set(n, x);
        }
        b
    }

    /// Elementwise mean of breakdowns, accumulated in slice order.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        let mut out = Self::default();
        if items.is_empty() {
            return out;
        }
        let n = items.len() as f64;
        for term in Self::TERMS.iter().chain(&["total"]) {
            let s: f64 = items.iter().map(|b| b.get(term)).sum();
            if *term == "total" {
                out.total = s / n;
            } else {
                out.set(term, s / n);
            }
        }
        out.smooth_degenerate = items.iter().any(|b| b.smooth_degenerate);
        out
    }
}

/// Weighted sum of term values.
pub fn total_loss(terms: &LossBreakdown, w: &LossWeights) -> LossBreakdown {
    let total = w.latent * terms.latent
        + w.skeleton * terms.skeleton
        + w.aux * terms.aux
        + w.kl * terms.kl
        + w.phys * (w.bone * terms.bone + w.smooth * terms.smooth + w.seat * terms.seat);
    LossBreakdown { total, ..*terms }
}

// ----- selector matrices ---------------------------------------------------

/// `[2K, K]`: sums the x and y entries of each joint.
fn joint_sum(k: usize) -> Tensor {
    let mut s = Tensor::zeros(&[2 * k, k]);
    for j in 0..k {
        s.data_mut()[(2 * j) * k + j] = 1.0;
        s.data_mut()[(2 * j + 1) * k + j] = 1.0;
    }
    s
}

/// `[2K, 2E]`: per-edge coordinate differences `s_i - s_j`.
fn edge_diff(k: usize, edges: &[(usize, usize)]) -> Tensor {
    let e2 = 2 * edges.len();
    let mut m = Tensor::zeros(&[2 * k, e2]);
    for (e, &(i, j)) in edges.iter().enumerate() {
        for c in 0..2 {
            m.data_mut()[(2 * i + c) * e2 + 2 * e + c] += 1.0;
            m.data_mut()[(2 * j + c) * e2 + 2 * e + c] -= 1.0;
        }
    }
    m
}

/// `[n - order, n]` forward difference operator of order 1 or 2.
fn difference(n: usize, order: usize) -> Tensor {
    let rows = n - order;
    let mut m = Tensor::zeros(&[rows, n]);
    for r in 0..rows {
        if order == 1 {
            m.data_mut()[r * n + r] = -1.0;
            m.data_mut()[r * n + r + 1] = 1.0;
        } else {
            m.data_mut()[r * n + r] = 1.0;
            m.data_mut()[r * n + r + 1] = -2.0;
            m.data_mut()[r * n + r + 2] = 1.0;
        }
    }
    m
}

/// `[2K, |J|]` picking coordinate `c` of each listed joint.
fn coord_select(k: usize, joints: &[usize], c: usize) -> Tensor {
    let n = joints.len();
    let mut m = Tensor::zeros(&[2 * k, n]);
    for (col, &j) in joints.iter().enumerate() {
        m.data_mut()[(2 * j + c) * n + col] = 1.0;
    }
    m
}

// ----- tape terms ----------------------------------------------------------

/// `Σ_t Σ_k m_tk ‖ŝ_tk − s_tk‖² / (Σ_k m_tk + ε)`.
pub fn skeleton_term(g: &mut Graph<'_>, pred: Var, target: &Tensor, mask: &Tensor) -> Var {
    let (tf, w) = g.shape(pred);
    let k = w / 2;
    let t = g.constant(target.clone());
    let diff = g.sub(pred, t);
    let sq = g.square(diff);
    let sel = g.constant(joint_sum(k));
    let per_joint = g.matmul(sq, sel);
    let mut weights = mask.clone();
    for r in 0..tf {
        let denom: f64 = mask.row_slice(r).iter().sum::<f64>() + MASK_EPS;
        for x in &mut weights.data_mut()[r * k..(r + 1) * k] {
            *x /= denom;
        }
    }
    let wv = g.constant(weights);
    let weighted = g.mul(per_joint, wv);
    g.sum(weighted)
}

/// `Σ_t Σ_(i,j) |‖ŝ_i − ŝ_j‖ − ‖s_i − s_j‖|`.
pub fn bone_term(g: &mut Graph<'_>, pred: Var, target: &Tensor, edges: &[(usize, usize)]) -> Var {
    if edges.is_empty() {
        return g.constant(Tensor::scalar(0.0));
    }
    let k = g.shape(pred).1 / 2;
    let ed = edge_diff(k, edges);
    let pair = joint_sum(edges.len());
    let gt_len = target.matmul(&ed).expect("edge operator").map(|x| x * x).matmul(&pair).expect("pair sum").map(crate::numerics::math::sqrt);
    let e = g.constant(ed);
    let p = g.constant(pair);
    let d = g.matmul(pred, e);
    let sq = g.square(d);
    let l2 = g.matmul(sq, p);
    let len = g.sqrt(l2);
    let gl = g.constant(gt_len);
    let diff = g.sub(len, gl);
    let a = g.abs(diff);
    g.sum(a)
}

/// `Σ‖Δŝ − Δs‖² + Σ‖Δ²ŝ‖²`; terms without enough frames are skipped.
pub fn smooth_term(g: &mut Graph<'_>, pred: Var, target: &Tensor) -> (Var, bool) {
    let tf = g.shape(pred).0;
    let mut parts = Vec::new();
    if tf >= 2 {
        let d1 = difference(tf, 1);
        let dt = d1.matmul(target).expect("difference operator");
        let dv = g.constant(d1);
        let dp = g.matmul(dv, pred);
        let dtv = g.constant(dt);
        let diff = g.sub(dp, dtv);
        let sq = g.square(diff);
        parts.push(g.sum(sq));
    }
    if tf >= 3 {
        let d2 = g.constant(difference(tf, 2));
        let acc = g.matmul(d2, pred);
        let sq = g.square(acc);
        parts.push(g.sum(sq));
    }
    let degenerate = tf < 3;
    if parts.is_empty() {
        return (g.constant(Tensor::scalar(0.0)), degenerate);
    }
    (g.add_all(&parts), degenerate)
}

/// Hinge penalty for ROI joints leaving the region, summed over frames.
pub fn seat_term(g: &mut Graph<'_>, pred: Var, roi: &Roi, joints: &[usize]) -> Var {
    if joints.is_empty() {
        return g.constant(Tensor::scalar(0.0));
    }
    let k = g.shape(pred).1 / 2;
    let mut parts = Vec::with_capacity(4);
    for (c, lo, hi) in [(0, roi.x_min, roi.x_max), (1, roi.y_min, roi.y_max)] {
        let sel = g.constant(coord_select(k, joints, c));
        let x = g.matmul(pred, sel);
        let below = g.affine(x, -1.0, lo);
        let below = g.relu(below);
        let above = g.affine(x, 1.0, -hi);
        let above = g.relu(above);
        parts.push(g.sum(below));
        parts.push(g.sum(above));
    }
    g.add_all(&parts)
}

pub fn latent_term(g: &mut Graph<'_>, pred: Var, target: Var, mode: LatentMode) -> Var {
    let tf = g.shape(pred).0;
    let diff = g.sub(pred, target);
    let diff = match mode {
        LatentMode::Direct => diff,
        LatentMode::Velocity => {
            if tf < 2 {
                return g.constant(Tensor::scalar(0.0));
            }
            let d1 = g.constant(difference(tf, 1));
            g.matmul(d1, diff)
        }
    };
    let sq = g.square(diff);
    g.sum(sq)
}

/// Sum of the four cross-entropies.
pub fn aux_term(g: &mut Graph<'_>, logits: &[Var; 4], labels: [usize; 4]) -> Result<Var> {
    let mut parts = Vec::with_capacity(4);
    for (i, &l) in logits.iter().enumerate() {
        let classes = g.shape(l).1;
        if labels[i] >= classes {
            return Err(Error::LabelOutOfRange {
                head: LABEL_NAMES[i],
                value: labels[i],
                classes,
            });
        }
        let ls = g.log_softmax_rows(l);
        let p = g.pick(ls, labels[i]);
        parts.push(g.scale(p, -1.0));
    }
    Ok(g.add_all(&parts))
}

/// `½ ΣΣ (σ² + (μ − z)² − 1 − log σ²)` with `σ = exp(log_sigma)`.
pub fn kl_term(g: &mut Graph<'_>, mu: Var, log_sigma: Var, target: Var) -> Var {
    let two_ls = g.scale(log_sigma, 2.0);
    let var = g.exp(two_ls);
    let diff = g.sub(mu, target);
    let sq = g.square(diff);
    let a = g.add(var, sq);
    let b = g.sub(a, two_ls);
    let c = g.affine(b, 0.5, -0.5);
    g.sum(c)
}

// ----- plain entry points --------------------------------------------------

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            context: what.into(),
            expected: format!("{:?}", a.shape()),
            got: format!("{:?}", b.shape()),
        });
    }
    Ok(())
}

fn eval1(f: impl FnOnce(&mut Graph<'_>) -> Var) -> f64 {
    let mut g = Graph::new();
    let v = f(&mut g);
    g.scalar(v)
}

pub fn loss_skeleton(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<f64> {
    check_same(pred, target, "skeleton target")?;
    if mask.shape() != [pred.rows(), pred.cols() / 2] {
        return Err(Error::Shape {
            context: "skeleton mask".into(),
            expected: format!("[{}, {}]", pred.rows(), pred.cols() / 2),
            got: format!("{:?}", mask.shape()),
        });
    }
    Ok(eval1(|g| {
        let p = g.constant(pred.clone());
        skeleton_term(g, p, target, mask)
    }))
}

pub fn loss_bone(pred: &Tensor, target: &Tensor, edges: &[(usize, usize)]) -> Result<f64> {
    check_same(pred, target, "bone target")?;
    Ok(eval1(|g| {
        let p = g.constant(pred.clone());
        bone_term(g, p, target, edges)
    }))
}

/// Returns the loss and whether the window was too short for all terms.
pub fn loss_smooth(pred: &Tensor, target: &Tensor) -> Result<(f64, bool)> {
    check_same(pred, target, "smoothness target")?;
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let (v, degenerate) = smooth_term(&mut g, p, target);
    Ok((g.scalar(v), degenerate))
}

pub fn loss_seat(pred: &Tensor, roi: &Roi, joints: &[usize]) -> Result<f64> {
    if roi.x_min > roi.x_max || roi.y_min > roi.y_max {
        return Err(Error::InvalidConfig(format!("empty ROI {:?}", roi)));
    }
    Ok(eval1(|g| {
        let p = g.constant(pred.clone());
        seat_term(g, p, roi, joints)
    }))
}

pub fn loss_latent(pred: &Tensor, target: &Tensor, mode: LatentMode) -> Result<f64> {
    check_same(pred, target, "latent target")?;
    Ok(eval1(|g| {
        let p = g.constant(pred.clone());
        let t = g.constant(target.clone());
        latent_term(g, p, t, mode)
    }))
}

pub fn loss_aux(logits: &[Tensor; 4], labels: [usize; 4]) -> Result<f64> {
    let mut g = Graph::new();
    let vars = [0, 1, 2, 3].map(|i| g.constant(Tensor::matrix(1, logits[i].len(), logits[i].data().to_vec())));
    let v = aux_term(&mut g, &vars, labels)?;
    Ok(g.scalar(v))
}

pub fn loss_kl(mu: &Tensor, sigma: &Tensor, target: &Tensor) -> Result<f64> {
    check_same(mu, sigma, "kl sigma")?;
    check_same(mu, target, "kl target")?;
    if sigma.data().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::NonPositiveSigma);
    }
    Ok(eval1(|g| {
        let m = g.constant(mu.clone());
        let ls = g.constant(sigma.map(crate::numerics::math::ln));
        let t = g.constant(target.clone());
        kl_term(g, m, ls, t)
    }))
}

// ----- per-clip objective --------------------------------------------------

/// Everything the objective needs besides the rollout input.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `[Tf, 2K]` future skeleton.
    pub skeleton: Tensor,
    /// `[Tf, K]` future mask.
    pub mask: Tensor,
    pub labels: [usize; 4],
}

impl Targets {
    pub fn from_clip(clip: &Clip) -> Self {
        Self {
            skeleton: clip.coords_window(clip.t_obs, clip.t_pred()),
            mask: clip.mask_window(clip.t_obs, clip.t_pred()),
            labels: clip.labels.as_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub weights: LossWeights,
    pub latent_mode: LatentMode,
    pub roi: Roi,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            latent_mode: LatentMode::Direct,
            roi: Roi::default(),
        }
    }
}

/// Rolls out one clip and records every applicable loss term and their
/// weighted total. Skeleton and physical terms exist only for variants with a
/// pose head; the KL term only for the Gaussian transition.
pub fn clip_objective(
    arch: &Architecture,
    g: &mut Graph<'_>,
    input: &RolloutInput,
    targets: &Targets,
    cfg: &ObjectiveConfig,
    opts: &mut RolloutOptions<'_>,
) -> Result<(Objective, RolloutVars, bool)> {
    for (i, &l) in targets.labels.iter().enumerate() {
        if l >= LABEL_CLASSES[i] {
            return Err(Error::LabelOutOfRange {
                head: LABEL_NAMES[i],
                value: l,
                classes: LABEL_CLASSES[i],
            });
        }
    }
    let vars = arch.forward(g, input, opts)?;
    let w = &cfg.weights;
    let mut terms: Vec<(&'static str, Var)> = Vec::new();
    let mut weighted: Vec<Var> = Vec::new();
    let mut push = |g: &mut Graph<'_>, name: &'static str, v: Var, weight: f64| {
        terms.push((name, v));
        weighted.push(g.scale(v, weight));
    };
    let mut degenerate = false;
    if let Some(target) = vars.target_int {
        let pred = g.concat_rows(&vars.pred_int);
        let lat = latent_term(g, pred, target, cfg.latent_mode);
        push(g, "latent", lat, w.latent);
        if let Some(s) = vars.skeleton {
            let skel = skeleton_term(g, s, &targets.skeleton, &targets.mask);
            push(g, "skeleton", skel, w.skeleton);
        }
    }
    let aux = aux_term(g, &vars.logits, targets.labels)?;
    push(g, "aux", aux, w.aux);
    if let (Some(target), false) = (vars.target_int, vars.mu.is_empty()) {
        let mu = g.concat_rows(&vars.mu);
        let ls = g.concat_rows(&vars.log_sigma);
        let kl = kl_term(g, mu, ls, target);
        push(g, "kl", kl, w.kl);
    }
    if let Some(s) = vars.skeleton {
        let bone = bone_term(g, s, &targets.skeleton, arch.topology.edges());
        push(g, "bone", bone, w.phys * w.bone);
        let (smooth, deg) = smooth_term(g, s, &targets.skeleton);
        degenerate = deg;
        push(g, "smooth", smooth, w.phys * w.smooth);
        let seat = seat_term(g, s, &cfg.roi, arch.topology.roi_joints());
        push(g, "seat", seat, w.phys * w.seat);
    }
    let total = g.add_all(&weighted);
    Ok((Objective { total, terms }, vars, degenerate))
}
