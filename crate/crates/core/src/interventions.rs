//! Interventions on the external stream and the injection pathway, deviation
//! accounting against the factual rollout, and the zero-lookahead verifier.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Clip, Corpus};
use crate::error::{Error, Result};
use crate::evaluation::{self, HmSelection};
use crate::exec::Lanes;
use crate::model::{HistoryAccess, Injection, RolloutInput, RolloutTrace, WorldModel};
use crate::numerics::{math, Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum InterventionSpec {
    None,
    /// External features of another clip; `None` picks the next clip id.
    ExtSwapClip(Option<String>),
    /// Pooled external latents replaced by zero vectors.
    ExtRemove,
    /// Each step reads the external features `offset` steps earlier,
    /// clamped at the first frame; `None` uses `T_obs`.
    ExtShift(Option<usize>),
    /// Pool over the remaining views.
    ExtDropView(usize),
    GateClamp(f64),
    LambdaOverride(f64),
}

impl InterventionSpec {
    /// The Table-style default list: factual first.
    pub fn standard_set() -> Vec<Self> {
        vec![
            InterventionSpec::None,
            InterventionSpec::ExtSwapClip(None),
            InterventionSpec::ExtRemove,
            InterventionSpec::ExtShift(None),
            InterventionSpec::ExtDropView(1),
            InterventionSpec::LambdaOverride(0.0),
            InterventionSpec::LambdaOverride(1.0),
            InterventionSpec::LambdaOverride(2.0),
        ]
    }

    /// Parses `none`, `ext_swap[:ID]`, `ext_remove`, `ext_shift[:N]`,
    /// `ext_drop_view:V`, `gate_clamp:C`, `lambda_override:L`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bad = || Error::Intervention(format!("cannot parse `{}`", s));
        let num = |a: Option<&str>| -> Result<f64> { a.ok_or_else(bad)?.parse::<f64>().map_err(|_| bad()) };
        let spec = match (kind, arg) {
            ("none", None) => InterventionSpec::None,
            ("ext_swap", a) => InterventionSpec::ExtSwapClip(a.map(|x| x.to_string())),
            ("ext_remove", None) => InterventionSpec::ExtRemove,
            ("ext_shift", None) => InterventionSpec::ExtShift(None),
            ("ext_shift", Some(a)) => InterventionSpec::ExtShift(Some(a.parse().map_err(|_| bad())?)),
            ("ext_drop_view", Some(a)) => InterventionSpec::ExtDropView(a.parse().map_err(|_| bad())?),
            ("gate_clamp", a) => InterventionSpec::GateClamp(num(a)?),
            ("lambda_override", a) => InterventionSpec::LambdaOverride(num(a)?),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InterventionSpec::GateClamp(c) if !(0.0..=1.0).contains(&c) => {
                Err(Error::Intervention(format!("gate clamp must lie in [0, 1], got {}", c)))
            }
            InterventionSpec::LambdaOverride(l) if !(l >= 0.0 && l.is_finite()) => {
                Err(Error::Intervention(format!("lambda override must be nonnegative, got {}", l)))
            }
            InterventionSpec::ExtDropView(0) => Err(Error::UnknownView(0)),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InterventionSpec::None => "none".into(),
            InterventionSpec::ExtSwapClip(None) => "ext_swap".into(),
            InterventionSpec::ExtSwapClip(Some(id)) => format!("ext_swap:{}", id),
            InterventionSpec::ExtRemove => "ext_remove".into(),
            InterventionSpec::ExtShift(None) => "ext_shift".into(),
            InterventionSpec::ExtShift(Some(n)) => format!("ext_shift:{}", n),
            InterventionSpec::ExtDropView(v) => format!("ext_drop_view:{}", v),
            InterventionSpec::GateClamp(c) => format!("gate_clamp:{}", c),
            InterventionSpec::LambdaOverride(l) => format!("lambda_override:{}", l),
        }
    }
}

/// A rollout input and injection mode with an intervention applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervened {
    pub input: RolloutInput,
    pub injection: Injection,
}

fn shift_rows(x: &Tensor, offset: usize) -> Tensor {
    let (t, d) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(t * d);
    for r in 0..t {
        out.extend_from_slice(x.row_slice(r.saturating_sub(offset)));
    }
    Tensor::matrix(t, d, out)
}

/// Applies `spec` to `clip`. Internal features are never touched.
pub fn apply_intervention(corpus: &Corpus, clip: &Clip, spec: &InterventionSpec) -> Result<Intervened> {
    spec.validate()?;
    let mut input = RolloutInput::from_clip(clip);
    let mut injection = Injection::Learned;
    match spec {
        InterventionSpec::None => {}
        InterventionSpec::ExtSwapClip(source) => {
            let id = match source {
                Some(id) => id.as_str(),
                None => corpus.next_id(&clip.id)?,
            };
            let src = corpus.get(id)?;
            if src.t != clip.t || src.d() != clip.d() || src.v() != clip.v() {
                return Err(Error::Intervention(format!("clip `{}` does not match the shape of `{}`", id, clip.id)));
            }
            input.external = RolloutInput::from_clip(src).external;
        }
        InterventionSpec::ExtRemove => input.external_zeroed = true,
        InterventionSpec::ExtShift(offset) => {
            let offset = offset.unwrap_or(clip.t_obs);
            for (_, x) in &mut input.external {
                *x = shift_rows(x, offset);
            }
        }
        InterventionSpec::ExtDropView(v) => {
            if !input.external.iter().any(|(id, _)| id == v) {
                return Err(Error::UnknownView(*v));
            }
            if input.external.len() == 1 {
                return Err(Error::Intervention("cannot drop the only external view".into()));
            }
            input.external.retain(|(id, _)| id != v);
        }
        InterventionSpec::GateClamp(c) => injection = Injection::Clamp(*c),
        InterventionSpec::LambdaOverride(l) => injection = Injection::Override(*l),
    }
    Ok(Intervened { input, injection })
}

/// Mean pixel deviation between intervened and factual skeletons.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub spec: String,
    pub all: f64,
    pub hm: f64,
    /// Final horizon step only.
    pub last: f64,
    pub head: f64,
    pub hands: f64,
    pub per_horizon: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct DevSums {
    all: (f64, usize),
    last: (f64, usize),
    head: (f64, usize),
    hands: (f64, usize),
    horizon: Vec<(f64, usize)>,
}

impl DevSums {
    fn add(&mut self, o: &DevSums) {
        if self.horizon.is_empty() {
            self.horizon = vec![(0.0, 0); o.horizon.len()];
        }
        for (a, b) in self.horizon.iter_mut().zip(&o.horizon) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (a, b) in [
            (&mut self.all, o.all),
            (&mut self.last, o.last),
            (&mut self.head, o.head),
            (&mut self.hands, o.hands),
        ] {
            a.0 += b.0;
            a.1 += b.1;
        }
    }
}

fn mean(p: (f64, usize)) -> f64 {
    if p.1 == 0 {
        f64::NAN
    } else {
        p.0 / p.1 as f64
    }
}

fn deviation_sums(a: &Tensor, b: &Tensor, frame: (f64, f64), head: &[usize], hands: &[usize]) -> DevSums {
    let (tf, k) = (a.rows(), a.cols() / 2);
    let mut s = DevSums {
        horizon: vec![(0.0, 0); tf],
        ..DevSums::default()
    };
    for h in 0..tf {
        for j in 0..k {
            let dx = (a.get2(h, 2 * j) - b.get2(h, 2 * j)) * frame.0;
            let dy = (a.get2(h, 2 * j + 1) - b.get2(h, 2 * j + 1)) * frame.1;
            let e = math::sqrt(dx * dx + dy * dy);
            s.all.0 += e;
            s.all.1 += 1;
            s.horizon[h].0 += e;
            s.horizon[h].1 += 1;
            if h + 1 == tf {
                s.last.0 += e;
                s.last.1 += 1;
            }
            if head.contains(&j) {
                s.head.0 += e;
                s.head.1 += 1;
            }
            if hands.contains(&j) {
                s.hands.0 += e;
                s.hands.1 += 1;
            }
        }
    }
    s
}

fn skeleton_of(trace: RolloutTrace, model: &WorldModel) -> Result<Tensor> {
    trace.skeleton.ok_or_else(|| Error::NoPoseHead(model.arch.variant.name().into()))
}

/// One deviation row per spec, averaged per joint per frame over `clips`.
pub fn deviation_table<L: Lanes>(
    model: &WorldModel,
    corpus: &Corpus,
    clips: &[&Clip],
    specs: &[InterventionSpec],
    hm: HmSelection,
    lanes: &L,
) -> Result<Vec<DeviationReport>> {
    if !model.arch.variant.has_pose_head() {
        return Err(Error::NoPoseHead(model.arch.variant.name().into()));
    }
    if clips.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    for s in specs {
        s.validate()?;
    }
    let hm = evaluation::hm_subset(clips, hm)?;
    let topo = &model.arch.topology;
    let per_clip = lanes
        .map(clips.len(), |i| -> Result<Vec<DevSums>> {
            let clip = clips[i];
            let frame = (clip.skeleton.frame.0 as f64, clip.skeleton.frame.1 as f64);
            let factual = RolloutInput::from_clip(clip);
            let base = skeleton_of(
                model.arch.rollout(&model.params, &factual, Injection::Learned, HistoryAccess::Truncated)?,
                model,
            )?;
            specs
                .iter()
                .map(|spec| {
                    let iv = apply_intervention(corpus, clip, spec)?;
                    let s = skeleton_of(
                        model.arch.rollout(&model.params, &iv.input, iv.injection, HistoryAccess::Truncated)?,
                        model,
                    )?;
                    Ok(deviation_sums(&s, &base, frame, topo.head_joints(), topo.hand_joints()))
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(specs.len());
    for (si, spec) in specs.iter().enumerate() {
        let mut total = DevSums::default();
        let mut hm_sum = (0.0, 0);
        for (ci, sums) in per_clip.iter().enumerate() {
            total.add(&sums[si]);
            if hm.contains(&clips[ci].id) {
                hm_sum.0 += sums[si].all.0;
                hm_sum.1 += sums[si].all.1;
            }
        }
        rows.push(DeviationReport {
            spec: spec.label(),
            all: mean(total.all),
            hm: mean(hm_sum),
            last: mean(total.last),
            head: mean(total.head),
            hands: mean(total.hands),
            per_horizon: total.horizon.iter().copied().map(mean).collect(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuffixMode {
    Zero,
    Random,
}

impl SuffixMode {
    pub fn name(self) -> &'static str {
        match self {
            SuffixMode::Zero => "suffix_zero",
            SuffixMode::Random => "suffix_random",
        }
    }
}

pub const LOOKAHEAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadReport {
    pub mode: SuffixMode,
    /// Max abs difference of predicted skeleton coordinates at each horizon
    /// (predicted internal latents for variants without a pose head).
    pub per_horizon: Vec<f64>,
    pub max: f64,
}

impl LookaheadReport {
    pub fn passed(&self) -> bool {
        self.max <= LOOKAHEAD_TOLERANCE
    }
}

fn perturb_suffix(x: &mut Tensor, t_obs: usize, mode: SuffixMode, rng: &mut Rng) {
    let d = x.cols();
    for v in &mut x.data_mut()[t_obs * d..] {
        *v = match mode {
            SuffixMode::Zero => 0.0,
            SuffixMode::Random => 3.0 * rng.normal(),
        };
    }
}

fn predicted_rows(trace: &RolloutTrace) -> Tensor {
    match &trace.skeleton {
        Some(s) => s.clone(),
        None => {
            let d = trace.z_int.cols();
            let t_obs = trace.t_obs;
            Tensor::matrix(trace.t_pred(), d, trace.z_int.data()[t_obs * d..].to_vec())
        }
    }
}

fn row_max_diff(a: &Tensor, b: &Tensor, out: &mut [f64]) {
    for (h, o) in out.iter_mut().enumerate() {
        for (x, y) in a.row_slice(h).iter().zip(b.row_slice(h)) {
            let d = (x - y).abs();
            if !(d <= *o) {
                *o = d;
            }
        }
    }
}

/// Replaces every feature at `t >= T_obs` (internal and all external views)
/// and measures how far the predictions move.
pub fn verify_zero_lookahead<L: Lanes>(
    model: &WorldModel,
    clips: &[&Clip],
    mode: SuffixMode,
    seed: u64,
    history: HistoryAccess,
    lanes: &L,
) -> Result<LookaheadReport> {
    if clips.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let horizon = clips[0].t_pred();
    let per_clip = lanes
        .map(clips.len(), |i| -> Result<Vec<f64>> {
            let clip = clips[i];
            let input = RolloutInput::from_clip(clip);
            let factual = model.arch.rollout(&model.params, &input, Injection::Learned, history)?;
            let mut rng = Rng::with_stream(seed, i as u64);
            let mut perturbed = input.clone();
            perturb_suffix(&mut perturbed.internal, clip.t_obs, mode, &mut rng);
            for (_, x) in &mut perturbed.external {
                perturb_suffix(x, clip.t_obs, mode, &mut rng);
            }
            let alt = model.arch.rollout(&model.params, &perturbed, Injection::Learned, history)?;
            let mut out = vec![0.0; horizon];
            row_max_diff(&predicted_rows(&factual), &predicted_rows(&alt), &mut out);
            Ok(out)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut per_horizon = vec![0.0f64; horizon];
    for c in &per_clip {
        for (o, x) in per_horizon.iter_mut().zip(c) {
            if !(*x <= *o) {
                *o = *x;
            }
        }
    }
    let max = per_horizon.iter().fold(0.0f64, |m, &x| if x > m || x.is_nan() { x } else { m });
    Ok(LookaheadReport { mode, per_horizon, max })
}

/// Runs the factual rollout twice and returns the largest trace difference.
pub fn rerun_difference<L: Lanes>(model: &WorldModel, clips: &[&Clip], lanes: &L) -> Result<f64> {
    let diffs = lanes
        .map(clips.len(), |i| -> Result<f64> {
            let input = RolloutInput::from_clip(clips[i]);
            let a = model.arch.rollout(&model.params, &input, Injection::Learned, HistoryAccess::Truncated)?;
            let b = model.arch.rollout(&model.params, &input, Injection::Learned, HistoryAccess::Truncated)?;
            Ok(a.max_abs_diff(&b))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(diffs.into_iter().fold(0.0, f64::max))
}

/// Prediction step (1-based) with the largest mean gate activation; ties go
/// to the earliest step.
pub fn maximal_injection_step(trace: &RolloutTrace) -> Result<usize> {
    if trace.injection != Injection::Learned {
        return Err(Error::NoLearnedGate);
    }
    let gates = trace.gates.as_ref().ok_or(Error::NoLearnedGate)?;
    if gates.rows() == 0 {
        return Err(Error::Empty("gate trace"));
    }
    let means: Vec<f64> = (0..gates.rows())
        .map(|r| gates.row_slice(r).iter().sum::<f64>() / gates.cols() as f64)
        .collect();
    Ok(crate::model::rollout::argmax(&means) + 1)
}
