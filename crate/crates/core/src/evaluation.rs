//! Geometric and semantic metrics, the High-Motion subset, and report assembly.
//!
//! Geometric metrics are computed from one pass of per-joint pixel errors.
//! Every clip contributes a [`ClipRecord`] of sums and counts; reports are
//! always assembled from records, so a persisted record file reproduces the
//! report exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Clip, LABEL_CLASSES, LABEL_NAMES};
use crate::error::{Error, Result};
use crate::exec::Lanes;
use crate::model::{HistoryAccess, Injection, RolloutInput, WorldModel};
use crate::numerics::math;
use crate::numerics::Tensor;
use crate::topology::Topology;

pub const PCK_FRACTIONS: [f64; 2] = [0.05, 0.10];

pub fn diagonal(frame: (f64, f64)) -> f64 {
    math::sqrt(frame.0 * frame.0 + frame.1 * frame.1)
}

/// Pixel error of one visible joint at one horizon step (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointError {
    pub horizon: usize,
    pub joint: usize,
    pub px: f64,
}

fn check_pose_shapes(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.shape().len() != 2 || !pred.cols().is_multiple_of(2) {
        return Err(Error::Shape {
            context: "predicted skeleton".into(),
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    if mask.shape() != [pred.rows(), pred.cols() / 2] {
        return Err(Error::Shape {
            context: "joint mask".into(),
            expected: format!("[{}, {}]", pred.rows(), pred.cols() / 2),
            got: format!("{:?}", mask.shape()),
        });
    }
    Ok(())
}

/// Errors of every masked joint, in (horizon, joint) order. Coordinates are
/// normalized; errors are in pixels.
pub fn joint_errors(pred: &Tensor, target: &Tensor, mask: &Tensor, frame: (f64, f64)) -> Result<Vec<JointError>> {
    check_pose_shapes(pred, target, mask)?;
    let k = mask.cols();
    let mut out = Vec::new();
    for h in 0..pred.rows() {
        for j in 0..k {
            if mask.get2(h, j) <= 0.0 {
                continue;
            }
            let dx = (pred.get2(h, 2 * j) - target.get2(h, 2 * j)) * frame.0;
            let dy = (pred.get2(h, 2 * j + 1) - target.get2(h, 2 * j + 1)) * frame.1;
            out.push(JointError {
                horizon: h,
                joint: j,
                px: math::sqrt(dx * dx + dy * dy),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonError {
    /// Mean over masked joints at each horizon step; `NaN` where none are visible.
    pub per_horizon: Vec<f64>,
    /// Mean over all masked joints of the window.
    pub mean: f64,
}

pub fn mpjpe(pred: &Tensor, target: &Tensor, mask: &Tensor, frame: (f64, f64)) -> Result<HorizonError> {
    let errs = joint_errors(pred, target, mask, frame)?;
    if errs.is_empty() {
        return Err(Error::Empty("joint mask"));
    }
    let mut sums = vec![0.0; pred.rows()];
    let mut counts = vec![0usize; pred.rows()];
    for e in &errs {
        sums[e.horizon] += e.px;
        counts[e.horizon] += 1;
    }
    Ok(HorizonError {
        per_horizon: sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect(),
        mean: sums.iter().sum::<f64>() / errs.len() as f64,
    })
}

pub fn d_nmpjpe(mpjpe_px: f64, frame: (f64, f64)) -> f64 {
    100.0 * mpjpe_px / diagonal(frame)
}

/// Percentage of masked joints with error at most `fraction` of the diagonal.
pub fn pck(pred: &Tensor, target: &Tensor, mask: &Tensor, frame: (f64, f64), fraction: f64) -> Result<f64> {
    if !(fraction > 0.0) {
        return Err(Error::InvalidConfig(format!("PCK fraction must be positive, got {}", fraction)));
    }
    let errs = joint_errors(pred, target, mask, frame)?;
    if errs.is_empty() {
        return Err(Error::Empty("joint mask"));
    }
    let thr = fraction * diagonal(frame);
    let hits = errs.iter().filter(|e| e.px <= thr).count();
    Ok(100.0 * hits as f64 / errs.len() as f64)
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if preds.len() != labels.len() {
        return Err(Error::Shape {
            context: "accuracy".into(),
            expected: format!("{} labels", preds.len()),
            got: format!("{}", labels.len()),
        });
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1 over all `num_classes` classes, in
/// percent. A class with no true positives has F1 = 0, including classes
/// absent from both predictions and labels.
pub fn macro_f1(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    if preds.is_empty() || num_classes == 0 {
        return Err(Error::Empty("predictions"));
    }
    if preds.len() != labels.len() {
        return Err(Error::Shape {
            context: "macro F1".into(),
            expected: format!("{} labels", preds.len()),
            got: format!("{}", labels.len()),
        });
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= num_classes || l >= num_classes {
            return Err(Error::InvalidConfig(format!(
                "class index out of range: pred {}, label {}, classes {}",
                p, l, num_classes
            )));
        }
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[l] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|c| {
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64
            }
        })
        .sum();
    Ok(100.0 * total / num_classes as f64)
}

/// Mean per-joint frame-to-frame displacement, in pixels, of a `[Tf, 2K]`
/// window of normalized coordinates. All joints count, visible or not.
pub fn motion_score(window: &Tensor, frame: (f64, f64)) -> Result<f64> {
    let tf = window.rows();
    if tf < 2 {
        return Err(Error::InvalidConfig(format!("motion score needs at least 2 future frames, got {}", tf)));
    }
    let k = window.cols() / 2;
    let mut total = 0.0;
    for t in 0..tf - 1 {
        for j in 0..k {
            let dx = (window.get2(t + 1, 2 * j) - window.get2(t, 2 * j)) * frame.0;
            let dy = (window.get2(t + 1, 2 * j + 1) - window.get2(t, 2 * j + 1)) * frame.1;
            total += math::sqrt(dx * dx + dy * dy);
        }
    }
    Ok(total / ((tf - 1) * k) as f64)
}

pub fn clip_motion_score(clip: &Clip) -> Result<f64> {
    let frame = (clip.skeleton.frame.0 as f64, clip.skeleton.frame.1 as f64);
    motion_score(&clip.coords_window(clip.t_obs, clip.t_pred()), frame)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HmSelection {
    /// The top `⌈fraction · N⌉` clips.
    TopFraction(f64),
    /// The top `min(n, N)` clips.
    Count(usize),
}

impl Default for HmSelection {
    fn default() -> Self {
        HmSelection::TopFraction(0.10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmSubset {
    /// Selected ids in selection order (score descending, then id ascending).
    pub ids: Vec<String>,
    /// Score of the last selected clip; `NaN` when nothing is selected.
    pub threshold: f64,
}

impl HmSubset {
    pub fn contains(&self, id: &str) -> bool {
        self.ids.iter().any(|x| x == id)
    }
}

/// Ranks `(id, score)` pairs by descending score, ties by ascending id.
pub fn hm_select(scores: &[(String, f64)], selection: HmSelection) -> Result<HmSubset> {
    let n = match selection {
        HmSelection::TopFraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("HM fraction must lie in [0, 1], got {}", f)));
            }
            math::ceil(f * scores.len() as f64 - 1e-9).max(0.0) as usize
        }
        HmSelection::Count(n) => n,
    }
    .min(scores.len());
    let mut order: Vec<&(String, f64)> = scores.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let ids: Vec<String> = order[..n].iter().map(|(id, _)| id.clone()).collect();
    let threshold = if n == 0 { f64::NAN } else { order[n - 1].1 };
    Ok(HmSubset { ids, threshold })
}

pub fn hm_subset(clips: &[&Clip], selection: HmSelection) -> Result<HmSubset> {
    let scores = clips
        .iter()
        .map(|c| Ok((c.id.clone(), clip_motion_score(c)?)))
        .collect::<Result<Vec<_>>>()?;
    hm_select(&scores, selection)
}

// ----- predictors ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[Tf, 2K]` normalized future poses.
    pub skeleton: Option<Tensor>,
    pub labels: Option<[usize; 4]>,
}

pub trait Predictor: Sync {
    fn name(&self) -> String;
    fn has_pose_head(&self) -> bool;
    fn predict(&self, clip: &Clip) -> Result<Prediction>;
}

impl Predictor for WorldModel {
    fn name(&self) -> String {
        self.arch.variant.name().into()
    }

    fn has_pose_head(&self) -> bool {
        self.arch.variant.has_pose_head()
    }

    fn predict(&self, clip: &Clip) -> Result<Prediction> {
        let trace = self.arch.rollout(
            &self.params,
            &RolloutInput::from_clip(clip),
            Injection::Learned,
            HistoryAccess::Truncated,
        )?;
        Ok(Prediction {
            labels: Some(trace.labels()),
            skeleton: trace.skeleton,
        })
    }
}

/// Copies the last observed pose over the whole future window.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroVelocity;

impl Predictor for ZeroVelocity {
    fn name(&self) -> String {
        "zero_velocity".into()
    }

    fn has_pose_head(&self) -> bool {
        true
    }

    fn predict(&self, clip: &Clip) -> Result<Prediction> {
        Ok(Prediction {
            skeleton: Some(crate::baselines::zero_velocity_predict(clip)?),
            labels: None,
        })
    }
}

/// Returns the ground truth; the perfect-model fixture.
#[derive(Debug, Clone, Copy, Default)]
pub struct Oracle;

impl Predictor for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn has_pose_head(&self) -> bool {
        true
    }

    fn predict(&self, clip: &Clip) -> Result<Prediction> {
        Ok(Prediction {
            skeleton: Some(clip.coords_window(clip.t_obs, clip.t_pred())),
            labels: Some(clip.labels.as_array()),
        })
    }
}

// ----- records and reports -------------------------------------------------

/// Sums and counts of one clip's errors, enough to rebuild every report number.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub id: String,
    pub hm: bool,
    pub motion_score: f64,
    pub horizon_sum: Vec<f64>,
    pub horizon_count: Vec<usize>,
    pub pck_hits: [usize; 2],
    pub head_sum: f64,
    pub head_count: usize,
    pub hands_sum: f64,
    pub hands_count: usize,
    pub predicted: Option<[usize; 4]>,
    pub truth: [usize; 4],
}

impl ClipRecord {
    pub fn joints(&self) -> usize {
        self.horizon_count.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySummary {
    pub per_horizon: Vec<f64>,
    pub mpjpe: f64,
    pub d_nmpjpe: f64,
    pub pck05: f64,
    pub pck10: f64,
    pub joints: usize,
    pub clips: usize,
}

impl GeometrySummary {
    fn from_records<'a>(records: impl Iterator<Item = &'a ClipRecord>, horizon: usize, frame: (f64, f64)) -> Option<Self> {
        let mut sums = vec![0.0; horizon];
        let mut counts = vec![0usize; horizon];
        let mut hits = [0usize; 2];
        let mut clips = 0;
        for r in records {
            clips += 1;
            for h in 0..horizon {
                sums[h] += r.horizon_sum[h];
                counts[h] += r.horizon_count[h];
            }
            hits[0] += r.pck_hits[0];
            hits[1] += r.pck_hits[1];
        }
        let joints: usize = counts.iter().sum();
        if joints == 0 {
            return None;
        }
        let mpjpe = sums.iter().sum::<f64>() / joints as f64;
        Some(Self {
            per_horizon: sums
                .iter()
                .zip(&counts)
                .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
                .collect(),
            mpjpe,
            d_nmpjpe: d_nmpjpe(mpjpe, frame),
            pck05: 100.0 * hits[0] as f64 / joints as f64,
            pck10: 100.0 * hits[1] as f64 / joints as f64,
            joints,
            clips,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub all: GeometrySummary,
    pub hm: Option<GeometrySummary>,
    pub head_mpjpe: f64,
    pub hands_mpjpe: f64,
    pub hm_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadScore {
    pub head: &'static str,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub predictor: String,
    pub clips: usize,
    pub horizon: usize,
    pub frame: (f64, f64),
    pub hm_ids: Vec<String>,
    pub geometry: Option<GeometryReport>,
    pub semantic: Option<Vec<HeadScore>>,
}

impl MetricsReport {
    /// Assembles a report from per-clip records.
    pub fn from_records(predictor: &str, records: &[ClipRecord], horizon: usize, frame: (f64, f64), hm_threshold: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let mut hm_ids: Vec<String> = records.iter().filter(|r| r.hm).map(|r| r.id.clone()).collect();
        hm_ids.sort();
        let geometric = records[0].horizon_sum.len() == horizon && records.iter().any(|r| r.joints() > 0);
        let geometry = if geometric {
            let all = GeometrySummary::from_records(records.iter(), horizon, frame).ok_or(Error::Empty("joint mask"))?;
            let hm = GeometrySummary::from_records(records.iter().filter(|r| r.hm), horizon, frame);
            let group = |sum: fn(&ClipRecord) -> (f64, usize)| {
                let (s, c) = records.iter().map(sum).fold((0.0, 0), |(a, n), (s, c)| (a + s, n + c));
                if c == 0 {
                    f64::NAN
                } else {
                    s / c as f64
                }
            };
            Some(GeometryReport {
                all,
                hm,
                head_mpjpe: group(|r| (r.head_sum, r.head_count)),
                hands_mpjpe: group(|r| (r.hands_sum, r.hands_count)),
                hm_threshold,
            })
        } else {
            None
        };
        let semantic = if records.iter().all(|r| r.predicted.is_some()) {
            let mut heads = Vec::with_capacity(4);
            for i in 0..4 {
                let preds: Vec<usize> = records.iter().map(|r| r.predicted.unwrap()[i]).collect();
                let truth: Vec<usize> = records.iter().map(|r| r.truth[i]).collect();
                heads.push(HeadScore {
                    head: LABEL_NAMES[i],
                    accuracy: accuracy(&preds, &truth)?,
                    macro_f1: macro_f1(&preds, &truth, LABEL_CLASSES[i])?,
                });
            }
            Some(heads)
        } else {
            None
        };
        Ok(Self {
            predictor: predictor.into(),
            clips: records.len(),
            horizon,
            frame,
            hm_ids,
            geometry,
            semantic,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub hm: HmSelection,
    /// Demand skeleton metrics; predictors without a pose head are refused.
    pub geometric: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            hm: HmSelection::default(),
            geometric: true,
        }
    }
}

fn group_error(errs: &[JointError], joints: &[usize]) -> (f64, usize) {
    errs.iter()
        .filter(|e| joints.contains(&e.joint))
        .fold((0.0, 0), |(s, c), e| (s + e.px, c + 1))
}

fn clip_record(clip: &Clip, pred: &Prediction, topology: &Topology, geometric: bool, hm: bool, score: f64) -> Result<ClipRecord> {
    let frame = (clip.skeleton.frame.0 as f64, clip.skeleton.frame.1 as f64);
    let tf = clip.t_pred();
    let mut rec = ClipRecord {
        id: clip.id.clone(),
        hm,
        motion_score: score,
        horizon_sum: Vec::new(),
        horizon_count: Vec::new(),
        pck_hits: [0, 0],
        head_sum: 0.0,
        head_count: 0,
        hands_sum: 0.0,
        hands_count: 0,
        predicted: pred.labels,
        truth: clip.labels.as_array(),
    };
    if geometric {
        let s = pred.skeleton.as_ref().ok_or_else(|| Error::NoPoseHead(clip.id.clone()))?;
        let target = clip.coords_window(clip.t_obs, tf);
        let mask = clip.mask_window(clip.t_obs, tf);
        let errs = joint_errors(s, &target, &mask, frame)?;
        rec.horizon_sum = vec![0.0; tf];
        rec.horizon_count = vec![0; tf];
        let diag = diagonal(frame);
        for e in &errs {
            rec.horizon_sum[e.horizon] += e.px;
            rec.horizon_count[e.horizon] += 1;
            for (i, f) in PCK_FRACTIONS.iter().enumerate() {
                if e.px <= f * diag {
                    rec.pck_hits[i] += 1;
                }
            }
        }
        (rec.head_sum, rec.head_count) = group_error(&errs, topology.head_joints());
        (rec.hands_sum, rec.hands_count) = group_error(&errs, topology.hand_joints());
    }
    Ok(rec)
}

/// Per-clip records for `clips` under `predictor`, in clip order.
pub fn evaluate_records<P: Predictor + ?Sized, L: Lanes>(
    predictor: &P,
    clips: &[&Clip],
    topology: &Topology,
    opts: &EvalOptions,
    lanes: &L,
) -> Result<(Vec<ClipRecord>, f64)> {
    if clips.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if opts.geometric && !predictor.has_pose_head() {
        return Err(Error::NoPoseHead(predictor.name()));
    }
    let (scores, hm) = if clips[0].t_pred() >= 2 {
        let scores = lanes
            .map(clips.len(), |i| clip_motion_score(clips[i]).map(|s| (clips[i].id.clone(), s)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let hm = hm_select(&scores, opts.hm)?;
        (scores.into_iter().map(|(_, s)| s).collect(), hm)
    } else {
        (
            vec![f64::NAN; clips.len()],
            HmSubset {
                ids: Vec::new(),
                threshold: f64::NAN,
            },
        )
    };
    let records = lanes
        .map(clips.len(), |i| {
            let clip = clips[i];
            let pred = predictor.predict(clip)?;
            clip_record(clip, &pred, topology, opts.geometric, hm.contains(&clip.id), scores[i])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((records, hm.threshold))
}

pub fn evaluate<P: Predictor + ?Sized, L: Lanes>(
    predictor: &P,
    clips: &[&Clip],
    topology: &Topology,
    opts: &EvalOptions,
    lanes: &L,
) -> Result<(MetricsReport, Vec<ClipRecord>)> {
    let (records, threshold) = evaluate_records(predictor, clips, topology, opts, lanes)?;
    let c = clips[0];
    let frame = (c.skeleton.frame.0 as f64, c.skeleton.frame.1 as f64);
    let report = MetricsReport::from_records(&predictor.name(), &records, c.t_pred(), frame, threshold)?;
    Ok((report, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let frame = (1920.0, 1080.0);
        let s = Tensor::row(vec![0.5, 0.5]);
        let p = Tensor::row(vec![0.5 + 3.0 / 1920.0, 0.5 + 4.0 / 1080.0]);
        let m = Tensor::row(vec![1.0]);
        let e = mpjpe(&p, &s, &m, frame).unwrap();
        assert!((e.mean - 5.0).abs() < 1e-9);
        assert_eq!(mpjpe(&s, &s, &m, frame).unwrap().mean, 0.0);
        assert!(mpjpe(&p, &s, &Tensor::row(vec![0.0]), frame).is_err());
    }

    #[test]
    fn diagonal_conversions() {
        let f = (1920.0, 1080.0);
        assert!((d_nmpjpe(52.89, f) - 2.40).abs() < 0.005);
        assert!((d_nmpjpe(71.47, f) - 3.24).abs() < 0.005);
        assert_eq!(d_nmpjpe(0.0, f), 0.0);
    }

    #[test]
    fn pck_threshold_is_inclusive() {
        let frame = (8.0, 6.0);
        let s = Tensor::row(vec![0.0, 0.0]);
        let p = Tensor::row(vec![0.625, 0.0]);
        let m = Tensor::row(vec![1.0]);
        assert_eq!(pck(&p, &s, &m, frame, 0.5).unwrap(), 100.0);
        assert_eq!(pck(&p, &s, &m, frame, 0.49).unwrap(), 0.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 100.0);
        assert_eq!(macro_f1(&[1, 0], &[0, 1], 2).unwrap(), 0.0);
        let f = macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((f - 100.0 * (2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(macro_f1(&[], &[], 2).is_err());
    }

    #[test]
    fn constant_motion() {
        let frame = (100.0, 100.0);
        let w = Tensor::matrix(3, 4, vec![0.0, 0.0, 0.5, 0.5, 0.03, 0.04, 0.53, 0.54, 0.06, 0.08, 0.56, 0.58]);
        assert!((motion_score(&w, frame).unwrap() - 5.0).abs() < 1e-9);
        let still = Tensor::matrix(2, 2, vec![0.3, 0.3, 0.3, 0.3]);
        assert_eq!(motion_score(&still, frame).unwrap(), 0.0);
        assert!(motion_score(&Tensor::row(vec![0.0, 0.0]), frame).is_err());
    }

    #[test]
    fn hm_ties_by_id() {
        let s = |id: &str, x| (String::from(id), x);
        let scores = [s("c", 1.0), s("a", 2.0), s("b", 2.0), s("d", 0.5)];
        let hm = hm_select(&scores, HmSelection::TopFraction(0.5)).unwrap();
        assert_eq!(hm.ids, ["a", "b"]);
        assert_eq!(hm.threshold, 2.0);
        let hm = hm_select(&scores, HmSelection::Count(3)).unwrap();
        assert_eq!(hm.ids, ["a", "b", "c"]);
        assert_eq!(hm_select(&scores, HmSelection::TopFraction(0.1)).unwrap().ids.len(), 1);
    }
}
