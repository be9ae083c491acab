//! AdamW, the learning-rate schedule, and the epoch loop with model selection.
//!
//! A run is a pure function of (corpus, architecture, config): initialization
//! draws from `Rng::new(seed)`, the batch order from stream 1 of the seed,
//! and transition noise (Gaussian variants only) from a stream numbered by
//! the global sample index. Per-clip gradients are summed in batch order, so
//! the lane count never changes the result.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Corpus, Split};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalOptions};
use crate::exec::Lanes;
use crate::model::{Architecture, RolloutInput, RolloutOptions, WorldModel};
use crate::numerics::math;
use crate::numerics::rng::RngState;
use crate::numerics::{grad_of_scalar, ParameterSet, Rng};
use crate::objectives::{clip_objective, LossBreakdown, ObjectiveConfig, Targets};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Cosine => "cosine",
            Schedule::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(Schedule::Cosine),
            "constant" => Some(Schedule::Constant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: AdamW,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub clip_norm: f64,
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            optimizer: AdamW::default(),
            batch_size: 16,
            epochs: 30,
            seed: 0,
            schedule: Schedule::Cosine,
            clip_norm: 10.0,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("invalid optimizer settings {:?}", o)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidConfig("clip norm must be positive".into()));
        }
        self.objective.weights.validate()
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: ParameterSet,
    pub v: ParameterSet,
}

impl Moments {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay. `step`
/// counts from 1. Frozen entries are left alone.
pub fn adamw_step(params: &mut ParameterSet, grads: &ParameterSet, moments: &mut Moments, step: u64, lr: f64, opt: &AdamW) -> Result<()> {
    params.check_layout(grads)?;
    for e in grads.iter() {
        if !e.tensor.is_finite() {
            return Err(Error::NonFiniteGradient { name: e.name.clone() });
        }
    }
    let step = step.max(1) as i32;
    let c1 = 1.0 - math::powi(opt.beta1, step);
    let c2 = 1.0 - math::powi(opt.beta2, step);
    for i in 0..params.len() {
        let p = params.entry_mut(i);
        if !p.trainable {
            continue;
        }
        let g = grads.entry(i).tensor.data();
        let m = moments.m.entry_mut(i).tensor.data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = opt.beta1 * *mj + (1.0 - opt.beta1) * gj;
        }
        let v = moments.v.entry_mut(i).tensor.data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = opt.beta2 * *vj + (1.0 - opt.beta2) * gj * gj;
        }
        let m = moments.m.entry(i).tensor.data();
        let v = moments.v.entry(i).tensor.data();
        for ((x, mj), vj) in params.entry_mut(i).tensor.data_mut().iter_mut().zip(m).zip(v) {
            let update = (mj / c1) / (math::sqrt(vj / c2) + opt.eps);
            *x -= lr * (update + opt.weight_decay * *x);
        }
    }
    Ok(())
}

/// `base · ½(1 + cos(π · step / total))`; `base` when `total` is 0.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let s = step.min(total_steps) as f64 / total_steps as f64;
    base_lr * 0.5 * (1.0 + math::cos(core::f64::consts::PI * s))
}

pub fn scheduled_lr(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    match cfg.schedule {
        Schedule::Cosine => cosine_lr(step, total_steps, cfg.lr),
        Schedule::Constant => cfg.lr,
    }
}

/// Scales `grads` down to global norm `max_norm` if above it; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Complete training state after some number of epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub params: ParameterSet,
    pub moments: Moments,
    /// Optimizer steps taken.
    pub step: u64,
    pub epoch: usize,
    /// Batch-order generator, positioned for the next epoch.
    pub rng: RngState,
    /// Validation score used for selection (MPJPE in px, or the validation
    /// loss for variants without a pose head).
    pub val_metric: f64,
    pub corpus_id: String,
}

impl Checkpoint {
    pub fn model(&self) -> WorldModel {
        WorldModel {
            arch: self.arch.clone(),
            params: self.params.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss breakdown over the epoch's batches.
    pub train: LossBreakdown,
    pub val_metric: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    /// Row 0 describes the initialization.
    pub log: Vec<EpochLog>,
    pub diverged: Option<Error>,
}

impl TrainOutcome {
    pub fn val_metric_name(&self) -> &'static str {
        val_metric_name(&self.best.arch)
    }
}

pub fn val_metric_name(arch: &Architecture) -> &'static str {
    if arch.variant.has_pose_head() {
        "val_mpjpe"
    } else {
        "val_loss"
    }
}

struct Sample {
    input: RolloutInput,
    targets: Targets,
}

fn samples(corpus: &Corpus, split: Split) -> Result<Vec<Sample>> {
    Ok(corpus
        .split(split)?
        .into_iter()
        .map(|c| Sample {
            input: RolloutInput::from_clip(c),
            targets: Targets::from_clip(c),
        })
        .collect())
}

fn clip_loss(arch: &Architecture, params: &ParameterSet, s: &Sample, obj: &ObjectiveConfig, rng: Option<Rng>) -> Result<crate::numerics::gradcheck::GradResult> {
    let mut rng = rng;
    grad_of_scalar(params, |g| {
        let mut opts = RolloutOptions {
            rng: rng.as_mut(),
            ..RolloutOptions::default()
        };
        clip_objective(arch, g, &s.input, &s.targets, obj, &mut opts).map(|(o, _, _)| o)
    })
}

/// Mean objective over a split with mean transitions.
pub fn dataset_loss<L: Lanes>(arch: &Architecture, params: &ParameterSet, corpus: &Corpus, split: Split, obj: &ObjectiveConfig, lanes: &L) -> Result<LossBreakdown> {
    let set = samples(corpus, split)?;
    if set.is_empty() {
        return Err(Error::Empty("split"));
    }
    let parts = lanes
        .map(set.len(), |i| {
            clip_loss(arch, params, &set[i], obj, None).map(|r| LossBreakdown::from_terms(&r.terms, r.loss))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(LossBreakdown::mean(&parts))
}

/// Validation score: horizon-averaged MPJPE over the split, or the mean
/// objective for variants without a pose head.
pub fn validation_metric<L: Lanes>(arch: &Architecture, params: &ParameterSet, corpus: &Corpus, obj: &ObjectiveConfig, lanes: &L) -> Result<f64> {
    if arch.variant.has_pose_head() {
        let model = WorldModel {
            arch: arch.clone(),
            params: params.clone(),
        };
        let clips = corpus.split(Split::Val)?;
        let opts = EvalOptions {
            geometric: true,
            ..EvalOptions::default()
        };
        let (report, _) = evaluation::evaluate(&model, &clips, &arch.topology, &opts, lanes)?;
        Ok(report.geometry.map(|g| g.all.mpjpe).unwrap_or(f64::NAN))
    } else {
        Ok(dataset_loss(arch, params, corpus, Split::Val, obj, lanes)?.total)
    }
}

/// Epoch-0 checkpoint: fresh parameters and its validation score.
pub fn initial_checkpoint<L: Lanes>(corpus: &Corpus, arch: &Architecture, cfg: &TrainConfig, lanes: &L) -> Result<Checkpoint> {
    let params = arch.init_params(cfg.seed)?;
    let val_metric = validation_metric(arch, &params, corpus, &cfg.objective, lanes)?;
    Ok(Checkpoint {
        arch: arch.clone(),
        moments: Moments::zeros_like(&params),
        params,
        step: 0,
        epoch: 0,
        rng: Rng::with_stream(cfg.seed, 1).state(),
        val_metric,
        corpus_id: corpus.manifest.corpus_id.clone(),
    })
}

pub fn train<L: Lanes>(corpus: &Corpus, arch: &Architecture, cfg: &TrainConfig, lanes: &L, observer: &mut dyn FnMut(&EpochLog, &Checkpoint)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = initial_checkpoint(corpus, arch, cfg, lanes)?;
    let log0 = EpochLog {
        epoch: 0,
        train: LossBreakdown::default(),
        val_metric: start.val_metric,
        lr: scheduled_lr(cfg, 0, 1),
        grad_norm: 0.0,
    };
    observer(&log0, &start);
    let mut out = resume(corpus, start, cfg, lanes, observer)?;
    out.log.insert(0, log0);
    Ok(out)
}

/// Continues a run from `start` until `cfg.epochs` epochs are done. The best
/// checkpoint has the lowest validation score; ties go to the earlier epoch.
/// A non-finite loss or gradient stops the run, keeping the last good state.
pub fn resume<L: Lanes>(corpus: &Corpus, start: Checkpoint, cfg: &TrainConfig, lanes: &L, observer: &mut dyn FnMut(&EpochLog, &Checkpoint)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if start.corpus_id != corpus.manifest.corpus_id {
        return Err(Error::InvalidConfig(alloc::format!(
            "checkpoint was trained on `{}`, corpus is `{}`",
            start.corpus_id, corpus.manifest.corpus_id
        )));
    }
    let arch = start.arch.clone();
    let train_set = samples(corpus, Split::Train)?;
    if train_set.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if corpus.manifest.splits.val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut state = start;
    let mut best = state.clone();
    let mut log = Vec::new();
    let mut diverged = None;
    while state.epoch < cfg.epochs {
        match run_epoch(corpus, &arch, &train_set, &state, cfg, total_steps, lanes) {
            Ok((next, entry)) => {
                observer(&entry, &next);
                if next.val_metric < best.val_metric || !best.val_metric.is_finite() && next.val_metric.is_finite() {
                    best = next.clone();
                }
                log.push(entry);
                state = next;
            }
            Err(e @ Error::Diverged { .. }) => {
                diverged = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutcome {
        best,
        last: state,
        log,
        diverged,
    })
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFiniteLoss { term } => Error::Diverged { epoch, term },
        Error::NonFiniteGradient { name } => Error::Diverged {
            epoch,
            term: alloc::format!("gradient of {}", name),
        },
        other => other,
    }
}

fn run_epoch<L: Lanes>(
    corpus: &Corpus,
    arch: &Architecture,
    set: &[Sample],
    state: &Checkpoint,
    cfg: &TrainConfig,
    total_steps: usize,
    lanes: &L,
) -> Result<(Checkpoint, EpochLog)> {
    let epoch = state.epoch + 1;
    let mut next = state.clone();
    next.epoch = epoch;
    let mut rng = Rng::from_state(state.rng);
    let mut order: Vec<usize> = (0..set.len()).collect();
    rng.shuffle(&mut order);
    next.rng = rng.state();
    let gaussian = arch.variant.gaussian();
    let mut parts = Vec::new();
    let mut norm_sum = 0.0;
    let mut lr = cfg.lr;
    for batch in order.chunks(cfg.batch_size) {
        let base = next.step * cfg.batch_size as u64;
        let params = &next.params;
        let results = lanes.map(batch.len(), |slot| {
            let noise = gaussian.then(|| Rng::with_stream(cfg.seed, 2 + base + slot as u64));
            clip_loss(arch, params, &set[batch[slot]], &cfg.objective, noise)
        });
        let mut grads = params.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let mut batch_parts = Vec::with_capacity(batch.len());
        for r in results {
            let r = r.map_err(|e| diverged(epoch, e))?;
            grads.add_scaled(&r.grads, scale);
            batch_parts.push(LossBreakdown::from_terms(&r.terms, r.loss));
        }
        parts.push(LossBreakdown::mean(&batch_parts));
        norm_sum += clip_global_norm(&mut grads, cfg.clip_norm);
        lr = scheduled_lr(cfg, next.step as usize, total_steps);
        next.step += 1;
        adamw_step(&mut next.params, &grads, &mut next.moments, next.step, lr, &cfg.optimizer).map_err(|e| diverged(epoch, e))?;
    }
    let val = validation_metric(arch, &next.params, corpus, &cfg.objective, lanes)?;
    if !val.is_finite() {
        return Err(Error::Diverged {
            epoch,
            term: val_metric_name(arch).into(),
        });
    }
    next.val_metric = val;
    let entry = EpochLog {
        epoch,
        train: LossBreakdown::mean(&parts),
        val_metric: val,
        lr,
        grad_norm: norm_sum / parts.len() as f64,
    };
    Ok((next, entry))
}
