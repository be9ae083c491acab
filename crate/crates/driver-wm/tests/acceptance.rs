//! Acceptance run: one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use driver_wm::lanes::Threaded;
use driver_wm_core::baselines::default_weights;
use driver_wm_core::data::{synth_generate_corpus, Clip, Corpus, GeneratorConfig, Split};
use driver_wm_core::evaluation::*;
use driver_wm_core::exec::Sequential;
use driver_wm_core::interventions::*;
use driver_wm_core::model::*;
use driver_wm_core::numerics::{finite_diff_check, Objective, Rng, Tensor};
use driver_wm_core::objectives::*;
use driver_wm_core::topology::Topology;
use driver_wm_core::training::{train, TrainConfig};
use driver_wm_core::Error;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {:.1?}, limit {:.0?}", elapsed, limit))
}

/// Shared fixture: the default corpus and a main model trained on it.
struct Setup {
    corpus: Corpus,
    trained: WorldModel,
    train_time: Duration,
}

fn setup() -> Setup {
    let corpus = synth_generate_corpus(&GeneratorConfig::default(), 0).expect("default corpus");
    let m = &corpus.manifest;
    let arch = Architecture::new(ModelConfig::new(m.d, m.k, m.v), Variant::Main, Topology::toy(m.k)).expect("architecture");
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let out = train(&corpus, &arch, &cfg, &Sequential, &mut |_, _| {}).expect("training");
    assert!(out.diverged.is_none(), "training diverged");
    Setup {
        corpus,
        trained: out.best.model(),
        train_time: t0.elapsed(),
    }
}

fn c1() -> Verdict {
    let t0 = Instant::now();
    let f = (1920.0, 1080.0);
    let a = d_nmpjpe(52.89, f);
    let b = d_nmpjpe(71.47, f);
    ensure((a - 2.40).abs() <= 0.005, || format!("52.89 px -> {:.4} %", a))?;
    ensure((b - 3.24).abs() <= 0.005, || format!("71.47 px -> {:.4} %", b))?;
    within(t0.elapsed(), Duration::from_secs(1))?;
    Ok(format!("52.89 px -> {:.4} %, 71.47 px -> {:.4} %", a, b))
}

fn c2(s: &Setup) -> Verdict {
    let t0 = Instant::now();
    let clips = s.corpus.split(Split::Test).map_err(|e| e.to_string())?;
    let m = &s.corpus.manifest;
    let fresh = WorldModel::new(
        Architecture::new(ModelConfig::new(m.d, m.k, m.v), Variant::Main, Topology::toy(m.k)).unwrap(),
        17,
    )
    .unwrap();
    let mut worst_threaded: f64 = 0.0;
    for (label, model) in [("random init", &fresh), ("trained", &s.trained)] {
        for mode in [SuffixMode::Zero, SuffixMode::Random] {
            let r = verify_zero_lookahead(model, &clips, mode, 5, HistoryAccess::Truncated, &Sequential).map_err(|e| e.to_string())?;
            ensure(r.max == 0.0, || format!("{} {}: max abs diff {:e} in single-lane mode", label, mode.name(), r.max))?;
            let t = verify_zero_lookahead(model, &clips, mode, 5, HistoryAccess::Truncated, &Threaded::new(4)).map_err(|e| e.to_string())?;
            ensure(t.max <= 1e-6, || format!("{} {}: max abs diff {:e} with 4 lanes", label, mode.name(), t.max))?;
            worst_threaded = worst_threaded.max(t.max);
        }
    }
    let elapsed = t0.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "{} test clips, both models, both suffix modes: single-lane max 0, 4-lane max {:e} ({:.1?})",
        clips.len(),
        worst_threaded,
        elapsed
    ))
}

fn c3(s: &Setup) -> Verdict {
    let clips = s.corpus.split(Split::Test).map_err(|e| e.to_string())?;
    ensure(clips.len() == 64, || format!("expected 64 test clips, found {}", clips.len()))?;
    let model = &s.trained;
    for clip in &clips {
        let input = RolloutInput::from_clip(clip);
        for c in [0.0, 1.0] {
            let run = |inj| model.arch.rollout(&model.params, &input, inj, HistoryAccess::Truncated);
            let a = run(Injection::Clamp(c)).map_err(|e| e.to_string())?;
            let b = run(Injection::Override(c)).map_err(|e| e.to_string())?;
            let (sa, sb) = (a.skeleton.unwrap(), b.skeleton.unwrap());
            let same = sa.data().iter().zip(sb.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same, || format!("clip {}: gate {} and override {} skeletons differ", clip.id, c, c))?;
        }
    }
    Ok(format!("{} clips x {{0, 1}}: skeleton rollouts bit-identical", clips.len()))
}

fn c4() -> Verdict {
    let t0 = Instant::now();
    let gen = GeneratorConfig {
        t: 6,
        t_obs: 3,
        d: 8,
        k: 7,
        v: 2,
        n_train: 2,
        n_val: 1,
        n_test: 1,
        ..GeneratorConfig::default()
    };
    let corpus = synth_generate_corpus(&gen, 3).map_err(|e| e.to_string())?;
    let clips = corpus.split(Split::Train).map_err(|e| e.to_string())?;
    let samples: Vec<_> = clips.iter().map(|c| (RolloutInput::from_clip(c), Targets::from_clip(c))).collect();
    let mut worst = (0.0f64, String::new());
    let mut cases = vec![(Variant::KlBottleneck, LatentMode::Direct), (Variant::Main, LatentMode::Velocity)];
    cases.extend(Variant::ALL.into_iter().filter(|v| v.trainable()).map(|v| (v, LatentMode::Direct)));
    for (variant, latent_mode) in cases {
        let mut mc = ModelConfig::new(gen.d, gen.k, gen.v);
        mc.channels = 4;
        let model = WorldModel::new(Architecture::new(mc, variant, Topology::toy(gen.k)).unwrap(), 5).unwrap();
        let obj = ObjectiveConfig {
            weights: LossWeights {
                phys: 1.0,
                kl: if variant.gaussian() { 0.5 } else { 0.0 },
                ..LossWeights::default()
            },
            latent_mode,
            roi: Roi {
                x_min: 0.45,
                x_max: 0.55,
                y_min: 0.45,
                y_max: 0.55,
            },
        };
        let report = finite_diff_check(
            &model.params,
            |g| {
                let mut totals = Vec::new();
                let mut terms = Vec::new();
                for (i, (input, targets)) in samples.iter().enumerate() {
                    let mut rng = Rng::new(100 + i as u64);
                    let mut opts = RolloutOptions {
                        rng: Some(&mut rng),
                        ..RolloutOptions::default()
                    };
                    let (o, _, _) = clip_objective(&model.arch, g, input, targets, &obj, &mut opts)?;
                    totals.push(o.total);
                    terms.extend(o.terms);
                }
                let sum = g.add_all(&totals);
                Ok(Objective {
                    total: g.scale(sum, 0.5),
                    terms,
                })
            },
            1e-5,
            1e-4,
        )
        .map_err(|e| e.to_string())?;
        ensure(report.tensors.len() == model.params.len(), || "not every tensor was checked".into())?;
        for t in &report.tensors {
            ensure(t.passed, || format!("{} {}: relative error {:.3e}", variant, t.name, t.error))?;
            if t.error > worst.0 {
                worst = (t.error, format!("{} {}", variant, t.name));
            }
        }
    }
    let elapsed = t0.elapsed();
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!("worst relative error {:.2e} ({}), {:.1?}", worst.0, worst.1, elapsed))
}

fn c5() -> Verdict {
    let mut rng = Rng::new(55);
    let topo = Topology::toy(17);
    for tf in [1, 3, 5] {
        let s = Tensor::matrix(tf, 34, (0..tf * 34).map(|_| rng.uniform_range(0.1, 0.9)).collect());
        let m = Tensor::matrix(tf, 17, (0..tf * 17).map(|_| f64::from(u8::from(rng.bernoulli(0.8)))).collect());
        let z = Tensor::matrix(tf, 8, (0..tf * 8).map(|_| rng.normal()).collect());
        let one = Tensor::filled(&[tf, 8], 1.0);
        let zeros = [
            ("skeleton", loss_skeleton(&s, &s, &m)),
            ("bone", loss_bone(&s, &s, topo.edges())),
            ("latent direct", loss_latent(&z, &z, LatentMode::Direct)),
            ("latent velocity", loss_latent(&z, &z, LatentMode::Velocity)),
            ("seat", loss_seat(&s, &Roi::default(), topo.roi_joints())),
            ("kl", loss_kl(&z, &one, &z)),
        ];
        for (name, v) in zeros {
            let v = v.map_err(|e| e.to_string())?;
            ensure(v == 0.0, || format!("{} loss {:e} on a perfect prediction (T_pred {})", name, v, tf))?;
        }
    }
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for case in 0..5u64 {
        let d = 4;
        let mu = Tensor::row((0..d).map(|_| rng.normal()).collect());
        let sigma = Tensor::row((0..d).map(|_| rng.uniform_range(0.3, 2.0)).collect());
        let z = Tensor::row((0..d).map(|_| rng.normal()).collect());
        let exact = loss_kl(&mu, &sigma, &z).map_err(|e| e.to_string())?;
        let mut mc = Rng::with_stream(77, case);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let mut r = 0.0;
            for i in 0..d {
                let (m, s, t) = (mu.data()[i], sigma.data()[i], z.data()[i]);
                let x = m + s * mc.normal();
                r += -0.5 * ((x - m) / s).powi(2) - s.ln() + 0.5 * (x - t).powi(2);
            }
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        let zscore = (mean - exact).abs() / se;
        ensure(zscore <= 3.0, || format!("KL case {}: exact {} vs Monte Carlo {} ({:.2} SE)", case, exact, mean, zscore))?;
        worst = worst.max(zscore);
    }
    Ok(format!("all zero cases exact; KL within {:.2} SE of 1e5-sample Monte Carlo on 5 cases", worst))
}

fn brute_errors(pred: &Tensor, target: &Tensor, mask: &Tensor, frame: (f64, f64)) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for h in 0..mask.rows() {
        for j in 0..mask.cols() {
            if mask.get2(h, j) > 0.0 {
                let dx = (pred.get2(h, 2 * j) - target.get2(h, 2 * j)) * frame.0;
                let dy = (pred.get2(h, 2 * j + 1) - target.get2(h, 2 * j + 1)) * frame.1;
                out.push((h, (dx * dx + dy * dy).sqrt()));
            }
        }
    }
    out
}

fn brute_f1(preds: &[usize], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let tp = preds.iter().zip(labels).filter(|&(&p, &l)| p == c && l == c).count();
        let fp = preds.iter().zip(labels).filter(|&(&p, &l)| p == c && l != c).count();
        let fneg = preds.iter().zip(labels).filter(|&(&p, &l)| p != c && l == c).count();
        if tp > 0 {
            total += 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64;
        }
    }
    100.0 * total / classes as f64
}

fn c6(s: &Setup) -> Verdict {
    for seed in 0..50u64 {
        let mut rng = Rng::new(6000 + seed);
        let tf = 1 + rng.below(6);
        let k = 1 + rng.below(20);
        let frame = (rng.uniform_range(100.0, 2000.0).round(), rng.uniform_range(100.0, 2000.0).round());
        let target = Tensor::matrix(tf, 2 * k, (0..tf * 2 * k).map(|_| rng.uniform()).collect());
        let spread = rng.uniform_range(0.0, 0.2);
        let pred = Tensor::matrix(tf, 2 * k, target.data().iter().map(|x| x + spread * rng.normal()).collect());
        let mut mask = Tensor::matrix(tf, k, (0..tf * k).map(|_| f64::from(u8::from(rng.bernoulli(0.7)))).collect());
        mask.data_mut()[0] = 1.0;
        let errs = brute_errors(&pred, &target, &mask, frame);
        let got = mpjpe(&pred, &target, &mask, frame).map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for h in 0..tf {
            let row: Vec<f64> = errs.iter().filter(|e| e.0 == h).map(|e| e.1).collect();
            let mut sum = 0.0;
            for e in &row {
                sum += e;
            }
            total += sum;
            let ok = if row.is_empty() { got.per_horizon[h].is_nan() } else { got.per_horizon[h] == sum / row.len() as f64 };
            ensure(ok, || format!("MPJPE instance {} horizon {}", seed, h + 1))?;
        }
        ensure(got.mean == total / errs.len() as f64, || format!("MPJPE instance {}", seed))?;
        let diag = (frame.0 * frame.0 + frame.1 * frame.1).sqrt();
        for f in [0.05, 0.10] {
            let expect = 100.0 * errs.iter().filter(|e| e.1 <= f * diag).count() as f64 / errs.len() as f64;
            let got = pck(&pred, &target, &mask, frame, f).map_err(|e| e.to_string())?;
            ensure(got == expect, || format!("PCK@{} instance {}: {} vs {}", f, seed, got, expect))?;
        }

        let classes = 2 + rng.below(6);
        let n = 1 + rng.below(40);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let preds: Vec<usize> = labels.iter().map(|&l| if rng.bernoulli(0.6) { l } else { rng.below(classes) }).collect();
        let f1 = macro_f1(&preds, &labels, classes).map_err(|e| e.to_string())?;
        let expect = brute_f1(&preds, &labels, classes);
        ensure(f1 == expect, || format!("Macro-F1 instance {}: {} vs {}", seed, f1, expect))?;

        let m = 1 + rng.below(30);
        let scores: Vec<(String, f64)> = (0..m).map(|i| (format!("{:05}", (i * 7919) % 100_000), rng.below(8) as f64 * 0.5)).collect();
        let fraction = rng.uniform();
        let got = hm_select(&scores, HmSelection::TopFraction(fraction)).map_err(|e| e.to_string())?;
        let take = ((fraction * m as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let ids: Vec<String> = sorted.into_iter().take(take).map(|x| x.0).collect();
        ensure(got.ids == ids, || format!("HM selection instance {}", seed))?;
    }
    let mut runs = 0;
    let topo = s.trained.arch.topology.clone();
    for split in [Split::Val, Split::Test] {
        let clips = s.corpus.split(split).map_err(|e| e.to_string())?;
        let preds: [&dyn Fn() -> Result<MetricsReport, Error>; 2] = [
            &|| evaluate(&s.trained, &clips, &topo, &EvalOptions::default(), &Sequential).map(|r| r.0),
            &|| evaluate(&ZeroVelocity, &clips, &topo, &EvalOptions::default(), &Sequential).map(|r| r.0),
        ];
        for p in preds {
            let r = p().map_err(|e| e.to_string())?;
            let g = r.geometry.unwrap();
            for (label, sum) in [("all", Some(&g.all)), ("hm", g.hm.as_ref())] {
                if let Some(sum) = sum {
                    ensure(sum.pck10 >= sum.pck05, || format!("{} {} {}: PCK@0.10 < PCK@0.05", r.predictor, split.name(), label))?;
                }
            }
            runs += 1;
        }
    }
    Ok(format!("MPJPE, PCK, Macro-F1, HM selection exact on 50 instances each; PCK@0.10 >= PCK@0.05 on {} evaluation runs", runs))
}

fn c7(s: &Setup) -> Verdict {
    let t0 = Instant::now();
    let val = s.corpus.split(Split::Val).map_err(|e| e.to_string())?;
    let topo = s.trained.arch.topology.clone();
    let opts = EvalOptions::default();
    let (main, _) = evaluate(&s.trained, &val, &topo, &opts, &Sequential).map_err(|e| e.to_string())?;
    let (zv, _) = evaluate(&ZeroVelocity, &val, &topo, &opts, &Sequential).map_err(|e| e.to_string())?;
    let hm = |r: &MetricsReport| r.geometry.as_ref().and_then(|g| g.hm.as_ref()).map(|h| h.mpjpe).unwrap_or(f64::NAN);
    let (hm_main, hm_zv) = (hm(&main), hm(&zv));
    ensure(hm_main < hm_zv, || format!("(a) val HM MPJPE main {:.3} px vs zero-velocity {:.3} px", hm_main, hm_zv))?;

    let test = s.corpus.split(Split::Test).map_err(|e| e.to_string())?;
    let specs = InterventionSpec::standard_set();
    let rows = deviation_table(&s.trained, &s.corpus, &test, &specs, HmSelection::default(), &Sequential).map_err(|e| e.to_string())?;
    let row = |label: &str| rows.iter().find(|r| r.spec == label).ok_or_else(|| format!("no `{}` row", label));
    let factual = row("none")?;
    let remove = row("ext_remove")?;
    let off = row("lambda_override:0")?;
    let drop = row("ext_drop_view:1")?;
    ensure(factual.all == 0.0 && factual.per_horizon.iter().all(|&x| x == 0.0), || format!("(b) factual deviation {}", factual.all))?;
    ensure(remove.all > 0.0, || "(b) ext_remove deviation is 0".into())?;
    ensure(off.all > drop.all, || format!("(b) lambda=0 {:.4} <= drop_view {:.4}", off.all, drop.all))?;
    ensure(remove.last > remove.all, || format!("(c) ext_remove last-step {:.4} <= mean {:.4}", remove.last, remove.all))?;
    let elapsed = s.train_time + t0.elapsed();
    within(elapsed, Duration::from_secs(1200))?;
    Ok(format!(
        "(a) val HM MPJPE {:.2} px < zero-velocity {:.2} px; (b) factual 0, ext_remove {:.3}, lambda=0 {:.3} > drop_view {:.3}; \
         (c) ext_remove h{} {:.3} > all {:.3}; {:.1?} incl. training",
        hm_main,
        hm_zv,
        remove.all,
        off.all,
        drop.all,
        remove.per_horizon.len(),
        remove.last,
        remove.all,
        elapsed
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_driver-wm")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{:?} failed: {}", args, String::from_utf8_lossy(&out.stderr)))
}

fn c8() -> Verdict {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let p = |d: &Path, s: &str| d.join(s).to_str().unwrap().to_string();
    for d in &dirs {
        let d = d.path();
        let (c, t, e) = (p(d, "corpus"), p(d, "train"), p(d, "eval"));
        cli(&["gen-data", "--seed", "8", "--out", &c, "--lanes", "1"])?;
        cli(&["train", "--seed", "8", "--corpus", &c, "--out", &t, "--epochs", "2", "--lanes", "1"])?;
        cli(&["eval", "--corpus", &c, "--checkpoint", &format!("{}/best.dwmc", t), "--out", &e, "--lanes", "1"])?;
    }
    let files = [
        "corpus/corpus.dwm",
        "corpus/manifest.txt",
        "train/best.dwmc",
        "train/last.dwmc",
        "train/train_log.tsv",
        "eval/metrics.txt",
        "eval/records.tsv",
    ];
    for f in files {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| format!("{}: {}", f, e))?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| format!("{}: {}", f, e))?;
        ensure(a == b, || format!("{} differs between runs", f))?;
    }
    Ok(format!("{} output files byte-identical across two gen-data/train/eval runs", files.len()))
}

fn time_constant(model: &WorldModel, clips: &[&Clip]) -> Result<(), String> {
    for clip in clips {
        let t = model
            .arch
            .rollout(&model.params, &RolloutInput::from_clip(clip), Injection::Learned, HistoryAccess::Truncated)
            .map_err(|e| e.to_string())?;
        let sk = t.skeleton.ok_or("no skeleton")?;
        for r in 1..sk.rows() {
            ensure(sk.row_slice(r) == sk.row_slice(0), || format!("clip {} row {} differs from row 0", clip.id, r))?;
        }
    }
    Ok(())
}

fn c9(s: &Setup) -> Verdict {
    let corpus = &s.corpus;
    let m = &corpus.manifest;
    let test = corpus.split(Split::Test).map_err(|e| e.to_string())?;
    let arch = |v: Variant| Architecture::new(ModelConfig::new(m.d, m.k, m.v), v, Topology::toy(m.k)).unwrap();

    let fresh = WorldModel::new(arch(Variant::StaticPooling), 9).unwrap();
    time_constant(&fresh, &test)?;
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let trained = train(corpus, &arch(Variant::StaticPooling), &cfg, &Sequential, &mut |_, _| {}).map_err(|e| e.to_string())?;
    time_constant(&trained.last.model(), &test)?;

    for clip in &corpus.clips {
        let row = (clip.t_obs - 1) * clip.k * 2;
        let last: Vec<f64> = clip.skeleton.coords[row..row + clip.k * 2].iter().map(|&x| f64::from(x)).collect();
        let got = ZeroVelocity.predict(clip).map_err(|e| e.to_string())?.skeleton.ok_or("no skeleton")?;
        ensure(got.rows() == clip.t - clip.t_obs, || format!("clip {}: {} future rows", clip.id, got.rows()))?;
        for h in 0..got.rows() {
            ensure(got.row_slice(h) == &last[..], || format!("clip {} horizon {} is not the last observed pose", clip.id, h + 1))?;
        }
    }

    let mut cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    cfg.objective.weights = default_weights(Variant::NoPoseHead);
    let nph = train(corpus, &arch(Variant::NoPoseHead), &cfg, &Sequential, &mut |_, _| {}).map_err(|e| e.to_string())?;
    let model = nph.last.model();
    let err = evaluate(&model, &test, &model.arch.topology, &EvalOptions::default(), &Sequential).err();
    ensure(err == Some(Error::NoPoseHead("no_pose_head".into())), || format!("no_pose_head evaluation returned {:?}", err))?;
    let semantic = EvalOptions {
        geometric: false,
        ..EvalOptions::default()
    };
    let (r, _) = evaluate(&model, &test, &model.arch.topology, &semantic, &Sequential).map_err(|e| e.to_string())?;
    ensure(r.geometry.is_none() && r.semantic.is_some(), || "semantic-only report malformed".into())?;
    Ok(format!(
        "static_pooling constant over {} test clips (init and trained); zero_velocity = copy-last on {} clips; no_pose_head: \"{}\"",
        test.len(),
        corpus.clips.len(),
        err.unwrap()
    ))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let t0 = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {}", msg))
    });
    let pass = v.is_ok();
    println!(
        "criterion {} [{}]: {} ({:.1?}) {}",
        n,
        name,
        if pass { "PASS" } else { "FAIL" },
        t0.elapsed(),
        v.unwrap_or_else(|e| e)
    );
    pass
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let t0 = Instant::now();
    println!("acceptance: generating the default corpus and training main for 30 epochs");
    let s = setup();
    println!("acceptance: setup done in {:.1?}", s.train_time);
    let results = [
        report(1, "metric conversion", c1),
        report(2, "zero lookahead", || c2(&s)),
        report(3, "gate/override identity", || c3(&s)),
        report(4, "gradient suite", c4),
        report(5, "loss zero cases", c5),
        report(6, "metric oracles", || c6(&s)),
        report(7, "causation reproduction", || c7(&s)),
        report(8, "determinism", c8),
        report(9, "baseline structure", || c9(&s)),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {}/{} criteria passed in {:.1?}", passed, results.len(), t0.elapsed());
    if passed != results.len() {
        std::process::exit(1);
    }
}
