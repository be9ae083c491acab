//! Clips, corpora and the synthetic scenario generator.
//!
//! A clip holds a `T`-frame skeleton track with per-joint confidence mask,
//! one internal (in-cabin) feature sequence and `V` external (out-cabin)
//! feature sequences, and four clip-level labels. Stored values are `f32`;
//! everything downstream computes in `f64`.
//!
//! The generator draws, per clip, an external event (onset step, intensity,
//! traffic classes) and a driver regime (posture, head pose). The event shows
//! up in the external features immediately; the driver reacts `lag` steps
//! later with an impulse on arms, shoulders and head that then decays under
//! damped second-order dynamics. Internal features are a fixed random
//! projection of the observed pose.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{math, Rng, Tensor};
use crate::topology::{Topology, EXTRA_ANCHORS};

/// Class counts of the four heads: driver behavior, driver emotion, traffic
/// context, vehicle condition.
pub const LABEL_CLASSES: [usize; 4] = [7, 5, 3, 5];
pub const LABEL_NAMES: [&str; 4] = ["dbr", "der", "tcr", "vcr"];

/// Default frame size in pixels.
pub const FRAME: (u32, u32) = (1920, 1080);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet {
    pub dbr: u8,
    pub der: u8,
    pub tcr: u8,
    pub vcr: u8,
}

impl LabelSet {
    pub fn new(dbr: u8, der: u8, tcr: u8, vcr: u8) -> Result<Self> {
        let l = Self { dbr, der, tcr, vcr };
        l.validate()?;
        Ok(l)
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.dbr as usize, self.der as usize, self.tcr as usize, self.vcr as usize]
    }

    pub fn validate(&self) -> Result<()> {
        for ((&value, &classes), &head) in self.as_array().iter().zip(&LABEL_CLASSES).zip(&LABEL_NAMES) {
            if value >= classes {
                return Err(Error::LabelOutOfRange { head, value, classes });
            }
        }
        Ok(())
    }
}

/// `T x K x 2` normalized coordinates with a `T x K` confidence mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub coords: Vec<f32>,
    pub mask: Vec<u8>,
    pub frame: (u32, u32),
}

/// `T x D` internal and `T x V x D` external features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub internal: Vec<f32>,
    pub external: Vec<f32>,
    pub d: usize,
    pub v: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub t: usize,
    pub t_obs: usize,
    pub k: usize,
    pub skeleton: SkeletonSequence,
    pub features: FeatureSequence,
    pub labels: LabelSet,
}

impl Clip {
    pub fn t_pred(&self) -> usize {
        self.t - self.t_obs
    }

    pub fn d(&self) -> usize {
        self.features.d
    }

    pub fn v(&self) -> usize {
        self.features.v
    }

    pub fn coord(&self, t: usize, j: usize) -> (f64, f64) {
        let i = (t * self.k + j) * 2;
        (self.skeleton.coords[i] as f64, self.skeleton.coords[i + 1] as f64)
    }

    pub fn visible(&self, t: usize, j: usize) -> bool {
        self.skeleton.mask[t * self.k + j] != 0
    }

    /// Frames `[start, start + len)` as a `[len, 2K]` matrix.
    pub fn coords_window(&self, start: usize, len: usize) -> Tensor {
        let w = 2 * self.k;
        let data = self.skeleton.coords[start * w..(start + len) * w].iter().map(|&x| x as f64).collect();
        Tensor::matrix(len, w, data)
    }

    /// Frames `[start, start + len)` of the mask as a `[len, K]` 0/1 matrix.
    pub fn mask_window(&self, start: usize, len: usize) -> Tensor {
        let data = self.skeleton.mask[start * self.k..(start + len) * self.k]
            .iter()
            .map(|&m| if m != 0 { 1.0 } else { 0.0 })
            .collect();
        Tensor::matrix(len, self.k, data)
    }

    pub fn internal(&self) -> Tensor {
        Tensor::matrix(self.t, self.d(), self.features.internal.iter().map(|&x| x as f64).collect())
    }

    /// External features of one view (0-based) as `[T, D]`.
    pub fn external_view(&self, v: usize) -> Tensor {
        let (d, nv) = (self.d(), self.v());
        let mut out = Vec::with_capacity(self.t * d);
        for t in 0..self.t {
            let s = (t * nv + v) * d;
            out.extend(self.features.external[s..s + d].iter().map(|&x| x as f64));
        }
        Tensor::matrix(self.t, d, out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, expected: usize, got: usize| Error::Shape {
            context: format!("clip {} {}", self.id, what),
            expected: expected.to_string(),
            got: got.to_string(),
        };
        if self.t_obs == 0 || self.t_obs >= self.t {
            return Err(Error::InvalidConfig(format!(
                "clip {}: need 1 <= T_obs < T, got T_obs={} T={}",
                self.id, self.t_obs, self.t
            )));
        }
        if self.skeleton.coords.len() != self.t * self.k * 2 {
            return Err(bad("coords", self.t * self.k * 2, self.skeleton.coords.len()));
        }
        if self.skeleton.mask.len() != self.t * self.k {
            return Err(bad("mask", self.t * self.k, self.skeleton.mask.len()));
        }
        if self.features.internal.len() != self.t * self.d() {
            return Err(bad("internal", self.t * self.d(), self.features.internal.len()));
        }
        if self.features.external.len() != self.t * self.v() * self.d() {
            return Err(bad("external", self.t * self.v() * self.d(), self.features.external.len()));
        }
        if self.v() == 0 {
            return Err(Error::Empty("external views"));
        }
        self.labels.validate()
    }
}

pub fn normalize_coords(pixel: (f64, f64), frame: (f64, f64)) -> (f64, f64) {
    (pixel.0 / frame.0, pixel.1 / frame.1)
}

pub fn denormalize_coords(norm: (f64, f64), frame: (f64, f64)) -> (f64, f64) {
    (norm.0 * frame.0, norm.1 * frame.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Deterministic split: sort ids, shuffle with `seed`, cut by fractions.
/// Validation and test sizes round down; train takes the remainder. Each
/// split is returned in sorted order.
pub fn split_corpus(clip_ids: &[String], fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if clip_ids.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("split fractions {:?} must be in [0,1] and sum to 1", fractions)));
    }
    let mut ids = clip_ids.to_vec();
    ids.sort();
    let mut rng = Rng::with_stream(seed, u64::MAX);
    rng.shuffle(&mut ids);
    let n = ids.len() as f64;
    let n_val = (fractions[1] * n + 1e-9) as usize;
    let n_test = (fractions[2] * n + 1e-9) as usize;
    let n_train = ids.len() - n_val - n_test;
    let mut train = ids[..n_train].to_vec();
    let mut val = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort();
    val.sort();
    test.sort();
    Ok(Splits { train, val, test })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub t: usize,
    pub t_obs: usize,
    pub v: usize,
    pub d: usize,
    pub k: usize,
    pub clip_ids: Vec<String>,
    pub splits: Splits,
}

impl CorpusManifest {
    pub fn num_clips(&self) -> usize {
        self.clip_ids.len()
    }

    /// Splits are disjoint and together cover every clip id.
    pub fn check_splits(&self) -> Result<()> {
        let mut all: Vec<&String> = self.splits.train.iter().chain(&self.splits.val).chain(&self.splits.test).collect();
        all.sort();
        let mut ids: Vec<&String> = self.clip_ids.iter().collect();
        ids.sort();
        if all != ids {
            return Err(Error::InvalidConfig("splits are not a partition of the clip ids".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub clips: Vec<Clip>,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Result<&Clip> {
        self.clips
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .map(|i| &self.clips[i])
            .map_err(|_| Error::UnknownClip(id.to_string()))
    }

    pub fn split(&self, split: Split) -> Result<Vec<&Clip>> {
        self.manifest.splits.get(split).iter().map(|id| self.get(id)).collect()
    }

    /// Clip id that follows `id` in sorted order, wrapping around.
    pub fn next_id(&self, id: &str) -> Result<&str> {
        let i = self
            .clips
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .map_err(|_| Error::UnknownClip(id.to_string()))?;
        Ok(&self.clips[(i + 1) % self.clips.len()].id)
    }
}

pub fn clip_id(index: usize) -> String {
    format!("{:05}", index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub t: usize,
    pub t_obs: usize,
    pub d: usize,
    pub k: usize,
    pub v: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub frame_w: u32,
    pub frame_h: u32,
    /// Probability that a clip contains an external event.
    pub event_rate: f64,
    /// Steps between event onset and the driver's reaction impulse.
    pub lag: usize,
    /// Share of event clips with amplified events and reactions.
    pub high_motion_fraction: f64,
    pub high_motion_gain: f64,
    /// Reaction impulse size in normalized units.
    pub impulse: f64,
    pub damping: f64,
    pub stiffness: f64,
    /// Skeleton observation noise, pixels (standard deviation).
    pub jitter_px: f64,
    pub occlusion: f64,
    pub feature_noise: f64,
    pub internal_gain: f64,
    pub external_gain: f64,
    pub view_variation: f64,
    pub tcr_prior: Vec<f64>,
    pub vcr_prior: Vec<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            t: 10,
            t_obs: 5,
            d: 64,
            k: 17,
            v: 3,
            n_train: 256,
            n_val: 32,
            n_test: 64,
            frame_w: FRAME.0,
            frame_h: FRAME.1,
            event_rate: 0.5,
            lag: 3,
            high_motion_fraction: 0.25,
            high_motion_gain: 2.5,
            impulse: 0.02,
            damping: 0.3,
            stiffness: 0.1,
            jitter_px: 0.5,
            occlusion: 0.03,
            feature_noise: 0.02,
            internal_gain: 10.0,
            external_gain: 1.0,
            view_variation: 0.3,
            tcr_prior: vec![0.6, 0.25, 0.15],
            vcr_prior: vec![0.5, 0.15, 0.15, 0.1, 0.1],
        }
    }
}

impl GeneratorConfig {
    pub fn num_clips(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.t_obs == 0 || self.t_obs >= self.t {
            return fail(format!("need 1 <= t_obs < t, got t_obs={} t={}", self.t_obs, self.t));
        }
        if self.d == 0 || self.k == 0 || self.v == 0 {
            return fail("d, k and v must be positive".into());
        }
        if self.num_clips() == 0 {
            return fail("corpus must contain at least one clip".into());
        }
        if self.frame_w == 0 || self.frame_h == 0 {
            return fail("frame size must be positive".into());
        }
        for (name, p) in [
            ("event_rate", self.event_rate),
            ("high_motion_fraction", self.high_motion_fraction),
            ("occlusion", self.occlusion),
            ("damping", self.damping),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{} must lie in [0, 1], got {}", name, p));
            }
        }
        for (name, x) in [
            ("high_motion_gain", self.high_motion_gain),
            ("impulse", self.impulse),
            ("stiffness", self.stiffness),
            ("jitter_px", self.jitter_px),
            ("feature_noise", self.feature_noise),
            ("internal_gain", self.internal_gain),
            ("external_gain", self.external_gain),
            ("view_variation", self.view_variation),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return fail(format!("{} must be finite and nonnegative, got {}", name, x));
            }
        }
        for (name, prior, n) in [("tcr_prior", &self.tcr_prior, 3), ("vcr_prior", &self.vcr_prior, 5)] {
            if prior.len() != n || prior.iter().any(|&p| !(p >= 0.0)) || prior.iter().sum::<f64>() <= 0.0 {
                return fail(format!("{} needs {} nonnegative weights with positive sum", name, n));
            }
        }
        Ok(())
    }

    /// One `key = value` line per field, in declaration order.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{:?}", x)).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "t = {}", self.t);
        let _ = writeln!(s, "t_obs = {}", self.t_obs);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "v = {}", self.v);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_val = {}", self.n_val);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let _ = writeln!(s, "frame_w = {}", self.frame_w);
        let _ = writeln!(s, "frame_h = {}", self.frame_h);
        let _ = writeln!(s, "event_rate = {:?}", self.event_rate);
        let _ = writeln!(s, "lag = {}", self.lag);
        let _ = writeln!(s, "high_motion_fraction = {:?}", self.high_motion_fraction);
        let _ = writeln!(s, "high_motion_gain = {:?}", self.high_motion_gain);
        let _ = writeln!(s, "impulse = {:?}", self.impulse);
        let _ = writeln!(s, "damping = {:?}", self.damping);
        let _ = writeln!(s, "stiffness = {:?}", self.stiffness);
        let _ = writeln!(s, "jitter_px = {:?}", self.jitter_px);
        let _ = writeln!(s, "occlusion = {:?}", self.occlusion);
        let _ = writeln!(s, "feature_noise = {:?}", self.feature_noise);
        let _ = writeln!(s, "internal_gain = {:?}", self.internal_gain);
        let _ = writeln!(s, "external_gain = {:?}", self.external_gain);
        let _ = writeln!(s, "view_variation = {:?}", self.view_variation);
        let _ = writeln!(s, "tcr_prior = {}", list(&self.tcr_prior));
        let _ = writeln!(s, "vcr_prior = {}", list(&self.vcr_prior));
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_text().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{:02x}", b);
    }
    s
}

/// Seated upper-body reference pose for `k` joints, normalized coordinates.
pub fn reference_pose(k: usize) -> Vec<(f64, f64)> {
    const BODY: [(f64, f64); 17] = [
        (0.50, 0.30),
        (0.52, 0.28),
        (0.48, 0.28),
        (0.54, 0.29),
        (0.46, 0.29),
        (0.60, 0.45),
        (0.40, 0.45),
        (0.66, 0.60),
        (0.34, 0.60),
        (0.60, 0.70),
        (0.40, 0.70),
        (0.56, 0.80),
        (0.44, 0.80),
        (0.62, 0.90),
        (0.38, 0.90),
        (0.62, 0.96),
        (0.38, 0.96),
    ];
    (0..k)
        .map(|j| {
            if j < 17 {
                BODY[j]
            } else {
                let e = j - 17;
                let a = BODY[EXTRA_ANCHORS[e % EXTRA_ANCHORS.len()]];
                let r = e / EXTRA_ANCHORS.len();
                (a.0 + ((r % 5) as f64 - 2.0) * 0.006, a.1 + ((r / 5 % 3) as f64 - 1.0) * 0.006)
            }
        })
        .collect()
}

/// Reaction direction of each joint (normalized units per unit impulse).
pub fn reaction_gains(k: usize) -> Vec<(f64, f64)> {
    let body = |j: usize| match j {
        0..=4 => (0.0, 0.4),
        5 | 6 => (0.0, -0.3),
        7 => (0.3, -0.6),
        8 => (-0.3, -0.6),
        9 => (0.4, -1.0),
        10 => (-0.4, -1.0),
        11 | 12 => (0.0, -0.1),
        _ => (0.0, 0.0),
    };
    (0..k)
        .map(|j| if j < 17 { body(j) } else { body(EXTRA_ANCHORS[(j - 17) % EXTRA_ANCHORS.len()]) })
        .collect()
}

/// Per-clip draws that determine everything else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub event: bool,
    pub onset: usize,
    pub intensity: f64,
    pub high_motion: bool,
    pub labels: LabelSet,
}

const N_DRIVERS: usize = 11;

struct Projections {
    internal: Tensor,
    external: Vec<Tensor>,
}

fn projections(cfg: &GeneratorConfig, seed: u64) -> Projections {
    let mut rng = Rng::with_stream(seed, 0);
    let w = 2 * cfg.k;
    let si = 1.0 / math::sqrt(w as f64);
    let internal = Tensor::matrix(w, cfg.d, (0..w * cfg.d).map(|_| rng.normal() * si).collect());
    let se = 1.0 / math::sqrt(N_DRIVERS as f64);
    let base: Vec<f64> = (0..N_DRIVERS * cfg.d).map(|_| rng.normal() * se).collect();
    let external = (0..cfg.v)
        .map(|_| {
            let data = base.iter().map(|b| b + cfg.view_variation * rng.normal() * se).collect();
            Tensor::matrix(N_DRIVERS, cfg.d, data)
        })
        .collect();
    Projections { internal, external }
}

fn draw_scenario(cfg: &GeneratorConfig, rng: &mut Rng) -> Scenario {
    let event = rng.bernoulli(cfg.event_rate);
    let onset = 1 + rng.below(cfg.t_obs.saturating_sub(1).max(1));
    let high_motion = event && rng.bernoulli(cfg.high_motion_fraction);
    let intensity = if !event {
        0.0
    } else if high_motion {
        cfg.high_motion_gain
    } else {
        1.0
    };
    let labels = LabelSet {
        dbr: rng.below(7) as u8,
        der: rng.below(5) as u8,
        tcr: rng.categorical(&cfg.tcr_prior) as u8,
        vcr: rng.categorical(&cfg.vcr_prior) as u8,
    };
    Scenario {
        event,
        onset,
        intensity,
        high_motion,
        labels,
    }
}

fn regime_shift(class: u8, classes: usize, radius: f64) -> (f64, f64) {
    if class == 0 {
        return (0.0, 0.0);
    }
    let a = 2.0 * core::f64::consts::PI * class as f64 / classes as f64;
    (radius * math::cos(a), radius * math::cos(a - core::f64::consts::FRAC_PI_2))
}

fn generate_clip(cfg: &GeneratorConfig, proj: &Projections, seed: u64, index: usize) -> (Clip, Scenario) {
    let mut rng = Rng::with_stream(seed, index as u64 + 1);
    let sc = draw_scenario(cfg, &mut rng);
    let (t_len, k, d, nv) = (cfg.t, cfg.k, cfg.d, cfg.v);
    let topo = Topology::toy(k);
    let reference = reference_pose(k);
    let gains = reaction_gains(k);
    let arms = regime_shift(sc.labels.dbr, 7, 0.03);
    let head = regime_shift(sc.labels.der, 5, 0.02);
    let mut base = reference.clone();
    for &j in topo.hand_joints() {
        base[j].0 += arms.0;
        base[j].1 += arms.1;
    }
    for j in [7usize, 8].into_iter().filter(|&j| j < k) {
        base[j].0 += 0.5 * arms.0;
        base[j].1 += 0.5 * arms.1;
    }
    for &j in topo.head_joints() {
        base[j].0 += head.0;
        base[j].1 += head.1;
    }
    let offset = (rng.uniform_range(-0.03, 0.03), rng.uniform_range(-0.03, 0.03));
    let scale = rng.uniform_range(0.92, 1.08);
    let (fw, fh) = (cfg.frame_w as f64, cfg.frame_h as f64);
    let reaction = sc.onset + cfg.lag;

    let mut x = vec![(0.0f64, 0.0f64); k];
    let mut vel = vec![(0.0f64, 0.0f64); k];
    let mut coords = Vec::with_capacity(t_len * k * 2);
    let mut mask = Vec::with_capacity(t_len * k);
    let mut internal = Vec::with_capacity(t_len * d);
    let mut external = Vec::with_capacity(t_len * nv * d);
    for t in 0..t_len {
        let kick = if sc.event && t == reaction { sc.intensity * cfg.impulse } else { 0.0 };
        for j in 0..k {
            vel[j].0 = (1.0 - cfg.damping) * vel[j].0 - cfg.stiffness * x[j].0 + kick * gains[j].0;
            vel[j].1 = (1.0 - cfg.damping) * vel[j].1 - cfg.stiffness * x[j].1 + kick * gains[j].1;
            x[j].0 += vel[j].0;
            x[j].1 += vel[j].1;
        }
        let mut flat = Vec::with_capacity(2 * k);
        for j in 0..k {
            let px = base[j].0 + x[j].0;
            let py = base[j].1 + x[j].1;
            let cx = 0.5 + scale * (px - 0.5) + offset.0 + rng.normal() * cfg.jitter_px / fw;
            let cy = 0.5 + scale * (py - 0.5) + offset.1 + rng.normal() * cfg.jitter_px / fh;
            let (cx, cy) = ((cx.clamp(0.0, 1.0) as f32), (cy.clamp(0.0, 1.0) as f32));
            coords.push(cx);
            coords.push(cy);
            mask.push(u8::from(!rng.bernoulli(cfg.occlusion)));
            flat.push((cx as f64 - reference[j].0) * cfg.internal_gain);
            flat.push((cy as f64 - reference[j].1) * cfg.internal_gain);
        }
        let f = Tensor::row(flat).matmul(&proj.internal).expect("projection shape");
        internal.extend(f.data().iter().map(|&y| (y + rng.normal() * cfg.feature_noise) as f32));

        let active = sc.event && t >= sc.onset;
        let mut u = [0.0; N_DRIVERS];
        u[sc.labels.tcr as usize] = 1.0;
        u[3 + sc.labels.vcr as usize] = 1.0;
        if active {
            u[8] = sc.intensity;
            u[9] = (t - sc.onset + 1) as f64 / t_len as f64;
        }
        u[10] = 1.0;
        let u = Tensor::row(u.iter().map(|x| x * cfg.external_gain).collect());
        for p in &proj.external {
            let f = u.matmul(p).expect("projection shape");
            external.extend(f.data().iter().map(|&y| (y + rng.normal() * cfg.feature_noise) as f32));
        }
    }
    let clip = Clip {
        id: clip_id(index),
        t: t_len,
        t_obs: cfg.t_obs,
        k,
        skeleton: SkeletonSequence {
            coords,
            mask,
            frame: (cfg.frame_w, cfg.frame_h),
        },
        features: FeatureSequence {
            internal,
            external,
            d,
            v: nv,
        },
        labels: sc.labels,
    };
    (clip, sc)
}

/// Generates the corpus together with each clip's hidden scenario.
pub fn synth_generate_with_scenarios(cfg: &GeneratorConfig, seed: u64) -> Result<(Corpus, Vec<Scenario>)> {
    cfg.validate()?;
    let proj = projections(cfg, seed);
    let (clips, scenarios): (Vec<Clip>, Vec<Scenario>) =
        (0..cfg.num_clips()).map(|i| generate_clip(cfg, &proj, seed, i)).unzip();
    let clip_ids: Vec<String> = clips.iter().map(|c| c.id.clone()).collect();
    let n = cfg.num_clips() as f64;
    let fractions = [cfg.n_train as f64 / n, cfg.n_val as f64 / n, cfg.n_test as f64 / n];
    let splits = split_corpus(&clip_ids, fractions, seed)?;
    let config_hash = cfg.hash();
    let manifest = CorpusManifest {
        corpus_id: format!("synth-{}-{}", seed, &config_hash[..12]),
        config_hash,
        seed,
        t: cfg.t,
        t_obs: cfg.t_obs,
        v: cfg.v,
        d: cfg.d,
        k: cfg.k,
        clip_ids,
        splits,
    };
    Ok((Corpus { clips, manifest }, scenarios))
}

pub fn synth_generate_corpus(cfg: &GeneratorConfig, seed: u64) -> Result<Corpus> {
    synth_generate_with_scenarios(cfg, seed).map(|(c, _)| c)
}
