//! Run configuration: a flat `key = value` file, overridden by flags.
//!
//! Every command writes the fully resolved configuration next to its outputs
//! as `run_config.txt`; passing that file back with `--config` reproduces the
//! run. Keys, with defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `seed` | 0 | generator, initialization, batch order and probe seed |
//! | `lanes` | 1 | per-clip worker threads; 1 is the reference mode |
//! | `out` | `out` | output directory |
//! | `corpus` | | corpus directory |
//! | `checkpoint` | | checkpoint file |
//! | `variant` | `main` | model variant |
//! | `topology` | | topology file; the toy body layout if empty |
//! | `split` | `test` | split used by `eval`, `intervene` and `verify-causality` |
//! | `gen.*` | | synthetic corpus generator fields |
//! | `model.*` | | `heads`, `queries`, `rank` (`auto` = D/4), `channels`, `log_sigma_min`, `log_sigma_max`, `gate_bias` |
//! | `train.*` | | `epochs`, `lr`, `batch_size`, `schedule`, `clip_norm`, `beta1`, `beta2`, `eps`, `weight_decay` |
//! | `loss.*` | | term weights `latent skeleton aux phys bone smooth seat kl`, `latent_mode`, `roi` |
//! | `eval.hm` | `fraction:0.1` | high-motion subset: `fraction:f` or `count:n` |
//! | `eval.geometric` | `true` | `false` reports semantic heads only |
//! | `intervene.specs` | the standard set | space-separated intervention specs |
//! | `verify.history` | `truncated` | `full_sequence` deliberately leaks the future |
//!
//! `loss.kl` defaults to the variant's value (1e-3 for `kl_bottleneck`, else
//! 0) unless given explicitly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use driver_wm_core::baselines::default_weights;
use driver_wm_core::data::{GeneratorConfig, Split};
use driver_wm_core::evaluation::HmSelection;
use driver_wm_core::interventions::InterventionSpec;
use driver_wm_core::model::{HistoryAccess, ModelConfig, Variant};
use driver_wm_core::objectives::{LatentMode, Roi};
use driver_wm_core::training::{Schedule, TrainConfig};

use crate::error::{self, Error, Result};
use crate::kv;

pub const RUN_CONFIG_FILE: &str = "run_config.txt";

/// Architecture settings not implied by the corpus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub heads: usize,
    pub queries: usize,
    pub rank: Option<usize>,
    pub channels: usize,
    pub log_sigma_min: f64,
    pub log_sigma_max: f64,
    pub gate_bias: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let c = ModelConfig::new(4, 1, 1);
        Self {
            heads: c.heads,
            queries: c.queries,
            rank: None,
            channels: c.channels,
            log_sigma_min: c.log_sigma_min,
            log_sigma_max: c.log_sigma_max,
            gate_bias: c.gate_bias,
        }
    }
}

impl ModelSettings {
    pub fn resolve(&self, d: usize, k: usize, v: usize) -> ModelConfig {
        let mut c = ModelConfig::new(d, k, v);
        c.heads = self.heads;
        c.queries = self.queries;
        if let Some(r) = self.rank {
            c.rank = r;
        }
        c.channels = self.channels;
        c.log_sigma_min = self.log_sigma_min;
        c.log_sigma_max = self.log_sigma_max;
        c.gate_bias = self.gate_bias;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub lanes: usize,
    pub out: PathBuf,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub variant: Variant,
    pub topology: Option<PathBuf>,
    pub split: Split,
    pub generator: GeneratorConfig,
    pub model: ModelSettings,
    /// `train.seed` mirrors `seed`.
    pub train: TrainConfig,
    pub hm: HmSelection,
    pub geometric: bool,
    pub interventions: Vec<InterventionSpec>,
    pub history: HistoryAccess,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut train = TrainConfig::default();
        train.objective.weights = default_weights(Variant::Main);
        Self {
            seed: 0,
            lanes: 1,
            out: PathBuf::from("out"),
            corpus: None,
            checkpoint: None,
            variant: Variant::Main,
            topology: None,
            split: Split::Test,
            generator: GeneratorConfig::default(),
            model: ModelSettings::default(),
            train,
            hm: HmSelection::default(),
            geometric: true,
            interventions: InterventionSpec::standard_set(),
            history: HistoryAccess::Truncated,
        }
    }
}

fn usage(msg: String) -> Error {
    Error::Usage(msg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value `{}` for `{}`", value, key)))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|x| num(key, x.trim())).collect()
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

pub fn hm_text(hm: HmSelection) -> String {
    match hm {
        HmSelection::TopFraction(f) => format!("fraction:{:?}", f),
        HmSelection::Count(n) => format!("count:{}", n),
    }
}

fn history_name(h: HistoryAccess) -> &'static str {
    match h {
        HistoryAccess::Truncated => "truncated",
        HistoryAccess::FullSequence => "full_sequence",
    }
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut kl_given = false;
        if let Some(p) = file {
            let text = error::read_text(p)?;
            let entries = kv::parse(&text).map_err(|e| Error::format(p, e))?;
            for e in &entries {
                kl_given |= e.key == "loss.kl";
                cfg.set(&e.key, &e.value)
                    .map_err(|err| usage(format!("{}:{}: {}", p.display(), e.line, err)))?;
            }
        }
        for (k, v) in overrides {
            kl_given |= k == "loss.kl";
            cfg.set(k, v)?;
        }
        if !kl_given {
            cfg.train.objective.weights.kl = default_weights(cfg.variant).kl;
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lanes == 0 {
            return Err(usage("lanes must be at least 1".into()));
        }
        self.generator.validate()?;
        self.train.validate()?;
        for s in &self.interventions {
            s.validate()?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.generator;
        let m = &mut self.model;
        let t = &mut self.train;
        let w = &mut t.objective.weights;
        match key {
            "seed" => self.seed = num(key, value)?,
            "lanes" => self.lanes = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "corpus" => self.corpus = path(value),
            "checkpoint" => self.checkpoint = path(value),
            "topology" => self.topology = path(value),
            "variant" => {
                self.variant = Variant::parse(value).ok_or_else(|| {
                    let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                    usage(format!("unknown variant `{}` (expected one of {})", value, names.join(", ")))
                })?
            }
            "split" => self.split = Split::parse(value).ok_or_else(|| usage(format!("unknown split `{}`", value)))?,
            "gen.t" => g.t = num(key, value)?,
            "gen.t_obs" => g.t_obs = num(key, value)?,
            "gen.d" => g.d = num(key, value)?,
            "gen.k" => g.k = num(key, value)?,
            "gen.v" => g.v = num(key, value)?,
            "gen.n_train" => g.n_train = num(key, value)?,
            "gen.n_val" => g.n_val = num(key, value)?,
            "gen.n_test" => g.n_test = num(key, value)?,
            "gen.frame_w" => g.frame_w = num(key, value)?,
            "gen.frame_h" => g.frame_h = num(key, value)?,
            "gen.event_rate" => g.event_rate = num(key, value)?,
            "gen.lag" => g.lag = num(key, value)?,
            "gen.high_motion_fraction" => g.high_motion_fraction = num(key, value)?,
            "gen.high_motion_gain" => g.high_motion_gain = num(key, value)?,
            "gen.impulse" => g.impulse = num(key, value)?,
            "gen.damping" => g.damping = num(key, value)?,
            "gen.stiffness" => g.stiffness = num(key, value)?,
            "gen.jitter_px" => g.jitter_px = num(key, value)?,
            "gen.occlusion" => g.occlusion = num(key, value)?,
            "gen.feature_noise" => g.feature_noise = num(key, value)?,
            "gen.internal_gain" => g.internal_gain = num(key, value)?,
            "gen.external_gain" => g.external_gain = num(key, value)?,
            "gen.view_variation" => g.view_variation = num(key, value)?,
            "gen.tcr_prior" => g.tcr_prior = list(key, value)?,
            "gen.vcr_prior" => g.vcr_prior = list(key, value)?,
            "model.heads" => m.heads = num(key, value)?,
            "model.queries" => m.queries = num(key, value)?,
            "model.rank" => m.rank = if value == "auto" { None } else { Some(num(key, value)?) },
            "model.channels" => m.channels = num(key, value)?,
            "model.log_sigma_min" => m.log_sigma_min = num(key, value)?,
            "model.log_sigma_max" => m.log_sigma_max = num(key, value)?,
            "model.gate_bias" => m.gate_bias = num(key, value)?,
            "train.epochs" => t.epochs = num(key, value)?,
            "train.lr" => t.lr = num(key, value)?,
            "train.batch_size" => t.batch_size = num(key, value)?,
            "train.schedule" => {
                t.schedule = Schedule::parse(value).ok_or_else(|| usage(format!("unknown schedule `{}`", value)))?
            }
            "train.clip_norm" => t.clip_norm = num(key, value)?,
            "train.beta1" => t.optimizer.beta1 = num(key, value)?,
            "train.beta2" => t.optimizer.beta2 = num(key, value)?,
            "train.eps" => t.optimizer.eps = num(key, value)?,
            "train.weight_decay" => t.optimizer.weight_decay = num(key, value)?,
            "loss.latent" => w.latent = num(key, value)?,
            "loss.skeleton" => w.skeleton = num(key, value)?,
            "loss.aux" => w.aux = num(key, value)?,
            "loss.phys" => w.phys = num(key, value)?,
            "loss.bone" => w.bone = num(key, value)?,
            "loss.smooth" => w.smooth = num(key, value)?,
            "loss.seat" => w.seat = num(key, value)?,
            "loss.kl" => w.kl = num(key, value)?,
            "loss.latent_mode" => {
                t.objective.latent_mode = match value {
                    "direct" => LatentMode::Direct,
                    "velocity" => LatentMode::Velocity,
                    _ => return Err(usage(format!("unknown latent mode `{}`", value))),
                }
            }
            "loss.roi" => {
                let r = list(key, value)?;
                if r.len() != 4 {
                    return Err(usage("loss.roi takes x_min,x_max,y_min,y_max".into()));
                }
                t.objective.roi = Roi {
                    x_min: r[0],
                    x_max: r[1],
                    y_min: r[2],
                    y_max: r[3],
                };
            }
            "eval.hm" => {
                self.hm = match value.split_once(':') {
                    Some(("fraction", f)) => HmSelection::TopFraction(num(key, f)?),
                    Some(("count", n)) => HmSelection::Count(num(key, n)?),
                    _ => return Err(usage(format!("eval.hm takes fraction:f or count:n, got `{}`", value))),
                }
            }
            "eval.geometric" => self.geometric = num(key, value)?,
            "intervene.specs" => {
                self.interventions = value
                    .split_whitespace()
                    .map(|s| InterventionSpec::parse(s).map_err(|e| usage(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "verify.history" => {
                self.history = match value {
                    "truncated" => HistoryAccess::Truncated,
                    "full_sequence" => HistoryAccess::FullSequence,
                    _ => return Err(usage(format!("unknown history mode `{}`", value))),
                }
            }
            _ => return Err(usage(format!("unknown configuration key `{}`", key))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# driver-wm run configuration\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{} = {}", k, v);
        };
        put("seed", self.seed.to_string());
        put("lanes", self.lanes.to_string());
        put("out", self.out.display().to_string());
        put("corpus", show_path(&self.corpus));
        put("checkpoint", show_path(&self.checkpoint));
        put("variant", self.variant.name().into());
        put("topology", show_path(&self.topology));
        put("split", self.split.name().into());
        for line in self.generator.canonical_text().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                put(&format!("gen.{}", k), v.to_string());
            }
        }
        let m = &self.model;
        put("model.heads", m.heads.to_string());
        put("model.queries", m.queries.to_string());
        put("model.rank", m.rank.map_or("auto".into(), |r| r.to_string()));
        put("model.channels", m.channels.to_string());
        put("model.log_sigma_min", format!("{:?}", m.log_sigma_min));
        put("model.log_sigma_max", format!("{:?}", m.log_sigma_max));
        put("model.gate_bias", format!("{:?}", m.gate_bias));
        let t = &self.train;
        put("train.epochs", t.epochs.to_string());
        put("train.lr", format!("{:?}", t.lr));
        put("train.batch_size", t.batch_size.to_string());
        put("train.schedule", t.schedule.name().into());
        put("train.clip_norm", format!("{:?}", t.clip_norm));
        put("train.beta1", format!("{:?}", t.optimizer.beta1));
        put("train.beta2", format!("{:?}", t.optimizer.beta2));
        put("train.eps", format!("{:?}", t.optimizer.eps));
        put("train.weight_decay", format!("{:?}", t.optimizer.weight_decay));
        let w = &t.objective.weights;
        for (k, v) in [
            ("latent", w.latent),
            ("skeleton", w.skeleton),
            ("aux", w.aux),
            ("phys", w.phys),
            ("bone", w.bone),
            ("smooth", w.smooth),
            ("seat", w.seat),
            ("kl", w.kl),
        ] {
            put(&format!("loss.{}", k), format!("{:?}", v));
        }
        let mode = match t.objective.latent_mode {
            LatentMode::Direct => "direct",
            LatentMode::Velocity => "velocity",
        };
        put("loss.latent_mode", mode.into());
        let r = t.objective.roi;
        put("loss.roi", format!("{:?},{:?},{:?},{:?}", r.x_min, r.x_max, r.y_min, r.y_max));
        put("eval.hm", hm_text(self.hm));
        put("eval.geometric", self.geometric.to_string());
        put(
            "intervene.specs",
            self.interventions.iter().map(|s| s.label()).collect::<Vec<_>>().join(" "),
        );
        put("verify.history", history_name(self.history).into());
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        error::write(&dir.join(RUN_CONFIG_FILE), self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved_from_text(text: &str) -> RunConfig {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, text).unwrap();
        RunConfig::resolve(Some(&p), &[]).unwrap()
    }

    #[test]
    fn text_round_trips() {
        let mut cfg = RunConfig::resolve(
            None,
            &[
                ("variant".into(), "kl_bottleneck".into()),
                ("seed".into(), "42".into()),
                ("gen.event_rate".into(), "0".into()),
                ("model.rank".into(), "3".into()),
                ("eval.hm".into(), "count:5".into()),
                ("intervene.specs".into(), "none ext_shift:2 gate_clamp:0.25".into()),
                ("corpus".into(), "data/c".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.objective.weights.kl, 1e-3);
        assert_eq!(cfg.train.seed, 42);
        let back = resolved_from_text(&cfg.to_text());
        assert_eq!(back, cfg);
        cfg.train.lr = 0.1 + 0.2;
        assert_eq!(resolved_from_text(&cfg.to_text()).train.lr, cfg.train.lr);
    }

    #[test]
    fn flags_override_file_and_explicit_kl_survives() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "seed = 3\nloss.kl = 0.5\nvariant = kl_bottleneck\n").unwrap();
        let cfg = RunConfig::resolve(Some(&p), &[("seed".into(), "4".into())]).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.objective.weights.kl, 0.5);
    }

    #[test]
    fn unknown_keys_and_values_are_usage_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("nope", "1"), Err(Error::Usage(_))));
        assert!(matches!(cfg.set("variant", "big"), Err(Error::Usage(_))));
        assert!(matches!(cfg.set("intervene.specs", "ext_wobble"), Err(Error::Usage(_))));
        assert!(matches!(cfg.set("train.lr", "fast"), Err(Error::Usage(_))));
    }
}
