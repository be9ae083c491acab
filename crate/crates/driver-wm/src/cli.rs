use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use driver_wm_core::baselines::build_variant;
use driver_wm_core::data::{synth_generate_corpus, Clip, Corpus};
use driver_wm_core::evaluation::{evaluate, EvalOptions, Predictor, ZeroVelocity};
use driver_wm_core::interventions::{deviation_table, rerun_difference, verify_zero_lookahead, InterventionSpec, SuffixMode};
use driver_wm_core::model::{HistoryAccess, Variant, WorldModel};
use driver_wm_core::topology::Topology;
use driver_wm_core::training::{train, Checkpoint};
use driver_wm_core::Error as CoreError;

use crate::checkpoint_io::{load_checkpoint, save_checkpoint};
use crate::config::{hm_text, RunConfig};
use crate::corpus_io::{load_corpus, save_corpus, LoadedCorpus};
use crate::error::{self, Error, Result};
use crate::lanes::Threaded;
use crate::report::{self, Origin};
use crate::topology_io::load_topology;

pub const BEST_CHECKPOINT: &str = "best.dwmc";
pub const LAST_CHECKPOINT: &str = "last.dwmc";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const TRAIN_SUMMARY: &str = "train_summary.txt";
pub const METRICS_REPORT: &str = "metrics.txt";
pub const CLIP_RECORDS: &str = "records.tsv";
pub const DEVIATION_REPORT: &str = "deviation.txt";
pub const CAUSALITY_REPORT: &str = "causality.txt";

#[derive(Debug, Parser)]
#[command(name = "driver-wm", version, about = "Traffic-conditioned latent world model for in-cabin driver dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic causally-coupled corpus into --out
    GenData(Flags),
    /// Train a variant on --corpus; writes checkpoints and the training log
    Train(Flags),
    /// Evaluate a checkpoint (or --variant zero_velocity) on a corpus split
    Eval(Flags),
    /// Run intervention probes against a checkpoint
    Intervene(Flags),
    /// Check that predictions never depend on future inputs
    VerifyCausality(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Intervene(_) => "intervene",
            Command::VerifyCausality(_) => "verify-causality",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::GenData(f) | Command::Train(f) | Command::Eval(f) | Command::Intervene(f) | Command::VerifyCausality(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Run configuration file (key = value)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Corpus directory
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Worker threads for per-clip work; 1 is the bit-exact reference mode
    #[arg(long)]
    pub lanes: Option<usize>,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// train, val or test
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub event_rate: Option<f64>,
    /// Intervention spec, e.g. `ext_remove` or `lambda_override:2`; repeatable
    #[arg(long = "spec")]
    pub specs: Vec<String>,
    /// Any configuration key, as key=value; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl Flags {
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{}`", s)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let path = |p: &PathBuf| p.display().to_string();
        let named = [
            ("seed", self.seed.map(|x| x.to_string())),
            ("out", self.out.as_ref().map(path)),
            ("corpus", self.corpus.as_ref().map(path)),
            ("checkpoint", self.checkpoint.as_ref().map(path)),
            ("variant", self.variant.clone()),
            ("lanes", self.lanes.map(|x| x.to_string())),
            ("topology", self.topology.as_ref().map(path)),
            ("split", self.split.clone()),
            ("train.epochs", self.epochs.map(|x| x.to_string())),
            ("train.lr", self.lr.map(|x| format!("{:?}", x))),
            ("gen.event_rate", self.event_rate.map(|x| format!("{:?}", x))),
            ("intervene.specs", (!self.specs.is_empty()).then(|| self.specs.join(" "))),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))));
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides()?)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.command.flags().resolve()?;
    let name = cli.command.name();
    match cli.command {
        Command::GenData(_) => gen_data(&cfg).map(|_| ()),
        Command::Train(_) => cmd_train(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::Intervene(_) => cmd_intervene(&cfg),
        Command::VerifyCausality(_) => cmd_verify(&cfg),
    }
    .map_err(|e| {
        if let Error::Usage(m) = e {
            Error::Usage(format!("{}: {}", name, m))
        } else {
            e
        }
    })
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Usage(format!("--{} is required", flag)))
}

fn origin(command: &str, cfg: &RunConfig, corpus: &LoadedCorpus, checkpoint: Option<&str>) -> Origin {
    Origin {
        command: command.into(),
        corpus_id: corpus.corpus.manifest.corpus_id.clone(),
        corpus_sha256: corpus.blob_sha256.clone(),
        checkpoint_sha256: checkpoint.map(str::to_string),
        split: cfg.split.name().into(),
    }
}

fn topology_for(cfg: &RunConfig, k: usize) -> Result<Topology> {
    match &cfg.topology {
        Some(p) => load_topology(p, k),
        None => Ok(Topology::toy(k)),
    }
}

fn split_clips<'a>(cfg: &RunConfig, corpus: &'a Corpus) -> Result<Vec<&'a Clip>> {
    let clips = corpus.split(cfg.split)?;
    if clips.is_empty() {
        return Err(Error::Usage(format!("split `{}` is empty", cfg.split.name())));
    }
    Ok(clips)
}

/// Loads the checkpoint and checks it against the corpus shape. The run
/// config's variant is replaced by the checkpoint's.
fn checkpoint_for(cfg: &mut RunConfig, corpus: &Corpus) -> Result<(Checkpoint, String)> {
    let (ck, sha) = load_checkpoint(require(&cfg.checkpoint, "checkpoint")?)?;
    let (c, m) = (&ck.arch.config, &corpus.manifest);
    if (c.d, c.k, c.v) != (m.d, m.k, m.v) {
        return Err(CoreError::Shape {
            context: "checkpoint vs corpus (D, K, V)".into(),
            expected: format!("({}, {}, {})", m.d, m.k, m.v),
            got: format!("({}, {}, {})", c.d, c.k, c.v),
        }
        .into());
    }
    cfg.variant = ck.arch.variant;
    Ok((ck, sha))
}

/// Writes the corpus to `cfg.out` and returns it with its blob hash.
pub fn gen_data(cfg: &RunConfig) -> Result<LoadedCorpus> {
    let corpus = synth_generate_corpus(&cfg.generator, cfg.seed)?;
    let sha = save_corpus(&cfg.out, &corpus)?;
    cfg.save(&cfg.out)?;
    println!(
        "wrote {} clips ({} train / {} val / {} test) to {}; corpus {}",
        corpus.clips.len(),
        corpus.manifest.splits.train.len(),
        corpus.manifest.splits.val.len(),
        corpus.manifest.splits.test.len(),
        cfg.out.display(),
        corpus.manifest.corpus_id
    );
    Ok(LoadedCorpus {
        corpus,
        blob_sha256: sha,
    })
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let loaded = load_corpus(require(&cfg.corpus, "corpus")?)?;
    let corpus = &loaded.corpus;
    let m = &corpus.manifest;
    let topology = topology_for(cfg, m.k)?;
    let arch = build_variant(cfg.variant, cfg.model.resolve(m.d, m.k, m.v), topology, &cfg.train.objective.weights)?;
    let lanes = Threaded::new(cfg.lanes);
    let metric = driver_wm_core::training::val_metric_name(&arch);
    let outcome = train(corpus, &arch, &cfg.train, &lanes, &mut |l, _| {
        println!(
            "epoch {:>3}  loss {:.6}  {} {:.6}  lr {:.3e}  grad_norm {:.4}",
            l.epoch, l.train.total, metric, l.val_metric, l.lr, l.grad_norm
        );
    })?;
    let best = save_checkpoint(&cfg.out.join(BEST_CHECKPOINT), &outcome.best)?;
    let last = save_checkpoint(&cfg.out.join(LAST_CHECKPOINT), &outcome.last)?;
    error::write(&cfg.out.join(TRAIN_LOG), report::train_log_text(&outcome.log, metric))?;
    let prov = origin("train", cfg, &loaded, None);
    error::write(&cfg.out.join(TRAIN_SUMMARY), report::train_summary_text(&outcome, &best, &last, &prov))?;
    cfg.save(&cfg.out)?;
    println!(
        "best epoch {} ({} {:.6}); checkpoints in {}",
        outcome.best.epoch,
        metric,
        outcome.best.val_metric,
        cfg.out.display()
    );
    match outcome.diverged {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let loaded = load_corpus(require(&cfg.corpus, "corpus")?)?;
    let corpus = &loaded.corpus;
    let lanes = Threaded::new(cfg.lanes);
    let opts = EvalOptions {
        hm: cfg.hm,
        geometric: cfg.geometric,
    };
    let (model, sha): (Option<WorldModel>, Option<String>) = if cfg.checkpoint.is_none() && cfg.variant == Variant::ZeroVelocity {
        (None, None)
    } else {
        let (ck, sha) = checkpoint_for(&mut cfg, corpus)?;
        (Some(ck.model()), Some(sha))
    };
    let clips = split_clips(&cfg, corpus)?;
    let (predictor, topology): (&dyn Predictor, Topology) = match &model {
        Some(m) => (m, m.arch.topology.clone()),
        None => (&ZeroVelocity, topology_for(&cfg, corpus.manifest.k)?),
    };
    let (report, records) = evaluate_dyn(predictor, &clips, &topology, &opts, &lanes)?;
    let prov = origin("eval", &cfg, &loaded, sha.as_deref());
    error::write(&cfg.out.join(METRICS_REPORT), report::metrics_text(&report, &prov))?;
    error::write(&cfg.out.join(CLIP_RECORDS), report::records_text(&records))?;
    cfg.save(&cfg.out)?;
    match &report.geometry {
        Some(g) => println!(
            "{}: MPJPE {:.3} px (HM {}), PCK@0.05 {:.2}%, PCK@0.10 {:.2}%",
            report.predictor,
            g.all.mpjpe,
            g.hm.as_ref().map_or("--".into(), |h| format!("{:.3} px", h.mpjpe)),
            g.all.pck05,
            g.all.pck10
        ),
        None => println!("{}: geometric metrics --", report.predictor),
    }
    Ok(())
}

struct DynPredictor<'a>(&'a dyn Predictor);

impl Predictor for DynPredictor<'_> {
    fn name(&self) -> String {
        self.0.name()
    }

    fn has_pose_head(&self) -> bool {
        self.0.has_pose_head()
    }

    fn predict(&self, clip: &Clip) -> driver_wm_core::Result<driver_wm_core::evaluation::Prediction> {
        self.0.predict(clip)
    }
}

fn evaluate_dyn(
    p: &dyn Predictor,
    clips: &[&Clip],
    topology: &Topology,
    opts: &EvalOptions,
    lanes: &Threaded,
) -> Result<(driver_wm_core::evaluation::MetricsReport, Vec<driver_wm_core::evaluation::ClipRecord>)> {
    Ok(evaluate(&DynPredictor(p), clips, topology, opts, lanes)?)
}

fn cmd_intervene(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let loaded = load_corpus(require(&cfg.corpus, "corpus")?)?;
    let corpus = &loaded.corpus;
    let (ck, sha) = checkpoint_for(&mut cfg, corpus)?;
    let clips = split_clips(&cfg, corpus)?;
    let mut specs = cfg.interventions.clone();
    if !specs.contains(&InterventionSpec::None) {
        specs.insert(0, InterventionSpec::None);
    }
    let rows = deviation_table(&ck.model(), corpus, &clips, &specs, cfg.hm, &Threaded::new(cfg.lanes))?;
    let prov = origin("intervene", &cfg, &loaded, Some(&sha));
    error::write(&cfg.out.join(DEVIATION_REPORT), report::deviation_text(&rows, &prov, &hm_text(cfg.hm)))?;
    cfg.save(&cfg.out)?;
    println!("{:<22} {:>10} {:>10} {:>10}", "spec", "all", "hm", "last");
    for r in &rows {
        println!("{:<22} {:>10.4} {:>10.4} {:>10.4}", r.spec, r.all, r.hm, r.last);
    }
    Ok(())
}

fn cmd_verify(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let loaded = load_corpus(require(&cfg.corpus, "corpus")?)?;
    let corpus = &loaded.corpus;
    let (ck, sha) = checkpoint_for(&mut cfg, corpus)?;
    let clips = split_clips(&cfg, corpus)?;
    let model = ck.model();
    let lanes = Threaded::new(cfg.lanes);
    let reports = [SuffixMode::Zero, SuffixMode::Random]
        .into_iter()
        .map(|mode| verify_zero_lookahead(&model, &clips, mode, cfg.seed, cfg.history, &lanes))
        .collect::<driver_wm_core::Result<Vec<_>>>()?;
    let rerun = rerun_difference(&model, &clips, &lanes)?;
    let passed = reports.iter().all(|r| r.passed()) && rerun == 0.0;
    let history = match cfg.history {
        HistoryAccess::Truncated => "truncated",
        HistoryAccess::FullSequence => "full_sequence",
    };
    let prov = origin("verify-causality", &cfg, &loaded, Some(&sha));
    error::write(&cfg.out.join(CAUSALITY_REPORT), report::causality_text(&reports, rerun, history, passed, &prov))?;
    cfg.save(&cfg.out)?;
    for r in &reports {
        println!("{}: max abs diff {:e}", r.mode.name(), r.max);
    }
    println!("rerun: max abs diff {:e}", rerun);
    if passed {
        println!("PASS");
        Ok(())
    } else {
        let worst = reports.iter().map(|r| r.max).fold(rerun, f64::max);
        Err(Error::Verification(format!("future inputs changed predictions by up to {:e}", worst)))
    }
}
