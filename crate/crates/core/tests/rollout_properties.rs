mod common;

use driver_wm_core::baselines::zero_velocity_predict;
use driver_wm_core::data::{Clip, Split};
use driver_wm_core::evaluation::{evaluate, EvalOptions, HmSelection, Oracle, Predictor, ZeroVelocity};
use driver_wm_core::exec::Sequential;
use driver_wm_core::interventions::*;
use driver_wm_core::model::{HistoryAccess, Injection, RolloutInput, RolloutTrace, Variant, WorldModel};
use driver_wm_core::numerics::Tensor;
use driver_wm_core::Error;

fn factual(model: &WorldModel, clip: &Clip) -> RolloutTrace {
    model
        .arch
        .rollout(&model.params, &RolloutInput::from_clip(clip), Injection::Learned, HistoryAccess::Truncated)
        .unwrap()
}

#[test]
fn random_init_has_zero_lookahead_for_every_variant() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 1);
    let clips = corpus.split(Split::Test).unwrap();
    for v in Variant::ALL.into_iter().filter(|v| v.trainable()) {
        let model = common::model_for(&cfg, v, 2);
        for mode in [SuffixMode::Zero, SuffixMode::Random] {
            let r = verify_zero_lookahead(&model, &clips, mode, 9, HistoryAccess::Truncated, &Sequential).unwrap();
            assert_eq!(r.max, 0.0, "{} {}", v, mode.name());
            assert_eq!(r.per_horizon.len(), cfg.t - cfg.t_obs);
            assert!(r.passed());
        }
    }
}

#[test]
fn leaky_fixture_fails_the_verifier() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 1);
    let clips = corpus.split(Split::Test).unwrap();
    let model = common::model_for(&cfg, Variant::Main, 2);
    let r = verify_zero_lookahead(&model, &clips, SuffixMode::Random, 9, HistoryAccess::FullSequence, &Sequential).unwrap();
    assert!(r.max > 1e-3, "leak not detected: {}", r.max);
    assert!(!r.passed());
}

#[test]
fn gate_clamp_and_override_coincide() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 4);
    let model = common::model_for(&cfg, Variant::Main, 3);
    for clip in &corpus.clips {
        for c in [0.0, 1.0] {
            let a = apply_intervention(&corpus, clip, &InterventionSpec::GateClamp(c)).unwrap();
            let b = apply_intervention(&corpus, clip, &InterventionSpec::LambdaOverride(c)).unwrap();
            let ta = model.arch.rollout(&model.params, &a.input, a.injection, HistoryAccess::Truncated).unwrap();
            let tb = model.arch.rollout(&model.params, &b.input, b.injection, HistoryAccess::Truncated).unwrap();
            assert_eq!(ta.max_abs_diff(&tb), 0.0);
            assert_eq!(ta.skeleton, tb.skeleton);
        }
    }
}

#[test]
fn spec_none_reproduces_the_factual_trace() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 5);
    let model = common::model_for(&cfg, Variant::Main, 1);
    for clip in &corpus.clips {
        let iv = apply_intervention(&corpus, clip, &InterventionSpec::None).unwrap();
        assert_eq!(iv.injection, Injection::Learned);
        assert_eq!(iv.input, RolloutInput::from_clip(clip));
        let t = model.arch.rollout(&model.params, &iv.input, iv.injection, HistoryAccess::Truncated).unwrap();
        assert_eq!(t.max_abs_diff(&factual(&model, clip)), 0.0);
        let shifted = apply_intervention(&corpus, clip, &InterventionSpec::ExtShift(Some(0))).unwrap();
        assert_eq!(shifted.input, iv.input);
    }
}

#[test]
fn interventions_never_touch_the_observed_internal_window() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 6);
    let model = common::model_for(&cfg, Variant::Main, 1);
    let d = cfg.d;
    for clip in corpus.clips.iter().take(4) {
        let base = factual(&model, clip);
        for spec in InterventionSpec::standard_set() {
            let iv = apply_intervention(&corpus, clip, &spec).unwrap();
            assert_eq!(iv.input.internal, clip.internal());
            let t = model.arch.rollout(&model.params, &iv.input, iv.injection, HistoryAccess::Truncated).unwrap();
            assert_eq!(t.z_int.data()[..cfg.t_obs * d], base.z_int.data()[..cfg.t_obs * d], "{}", spec.label());
        }
    }
}

#[test]
fn dropping_one_of_identical_views_changes_nothing() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 7);
    let model = common::model_for(&cfg, Variant::Main, 1);
    let mut clip = corpus.clips[0].clone();
    let (d, v) = (clip.d(), clip.v());
    for t in 0..clip.t {
        for view in 1..v {
            let (src, dst) = (t * v * d, (t * v + view) * d);
            let row: Vec<f32> = clip.features.external[src..src + d].to_vec();
            clip.features.external[dst..dst + d].copy_from_slice(&row);
        }
    }
    let base = factual(&model, &clip);
    let iv = apply_intervention(&corpus, &clip, &InterventionSpec::ExtDropView(2)).unwrap();
    assert_eq!(iv.input.external.len(), v - 1);
    let t = model.arch.rollout(&model.params, &iv.input, iv.injection, HistoryAccess::Truncated).unwrap();
    assert!(t.max_abs_diff(&base) < 1e-12);
}

#[test]
fn dropping_the_only_view_is_refused() {
    let mut cfg = common::small_generator(4);
    cfg.v = 1;
    let corpus = common::corpus(&cfg, 8);
    let r = apply_intervention(&corpus, &corpus.clips[0], &InterventionSpec::ExtDropView(1));
    assert!(matches!(r, Err(Error::Intervention(_))));
}

#[test]
fn swap_pairs_with_the_next_clip() {
    let cfg = common::small_generator(4);
    let corpus = common::corpus(&cfg, 9);
    let first = &corpus.clips[0];
    let iv = apply_intervention(&corpus, first, &InterventionSpec::ExtSwapClip(None)).unwrap();
    assert_eq!(iv.input.external, RolloutInput::from_clip(&corpus.clips[1]).external);
    let last = corpus.clips.last().unwrap();
    let iv = apply_intervention(&corpus, last, &InterventionSpec::ExtSwapClip(None)).unwrap();
    assert_eq!(iv.input.external, RolloutInput::from_clip(first).external);
}

#[test]
fn pathway_probes_need_a_gated_variant() {
    let cfg = common::small_generator(4);
    let corpus = common::corpus(&cfg, 10);
    let model = common::model_for(&cfg, Variant::SingleStream, 1);
    let iv = apply_intervention(&corpus, &corpus.clips[0], &InterventionSpec::LambdaOverride(0.0)).unwrap();
    let r = model.arch.rollout(&model.params, &iv.input, iv.injection, HistoryAccess::Truncated);
    assert!(matches!(r, Err(Error::NoInjectionPathway { .. })));
}

#[test]
fn deviation_table_factual_row_is_zero_and_gate_rows_match() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 11);
    let model = common::model_for(&cfg, Variant::Main, 1);
    let clips = corpus.split(Split::Test).unwrap();
    let specs = [
        InterventionSpec::None,
        InterventionSpec::GateClamp(0.0),
        InterventionSpec::LambdaOverride(0.0),
        InterventionSpec::ExtRemove,
    ];
    let rows = deviation_table(&model, &corpus, &clips, &specs, HmSelection::Count(1), &Sequential).unwrap();
    let f = &rows[0];
    assert_eq!((f.all, f.hm, f.last, f.head, f.hands), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert_eq!(rows[1].all, rows[2].all);
    assert_eq!(rows[1].per_horizon, rows[2].per_horizon);
    assert!(rows[3].all > 0.0);
}

#[test]
fn maximal_injection_step_rules() {
    let cfg = common::small_generator(4);
    let corpus = common::corpus(&cfg, 12);
    let model = common::model_for(&cfg, Variant::Main, 1);
    let mut trace = factual(&model, &corpus.clips[0]);
    let tf = trace.t_pred();
    trace.gates = Some(Tensor::filled(&[tf, cfg.d], 0.4));
    assert_eq!(maximal_injection_step(&trace).unwrap(), 1);
    let means = [0.1, 0.9, 0.3, 0.9];
    let mut g = Vec::new();
    for m in means {
        g.extend(std::iter::repeat_n(m, cfg.d));
    }
    trace.gates = Some(Tensor::matrix(4, cfg.d, g));
    assert_eq!(maximal_injection_step(&trace).unwrap(), 2);
    trace.injection = Injection::Override(0.5);
    assert_eq!(maximal_injection_step(&trace), Err(Error::NoLearnedGate));
}

#[test]
fn static_pooling_is_time_constant() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 13);
    let model = common::model_for(&cfg, Variant::StaticPooling, 1);
    for clip in &corpus.clips {
        let s = factual(&model, clip).skeleton.unwrap();
        for r in 1..s.rows() {
            assert_eq!(s.row_slice(r), s.row_slice(0));
        }
    }
}

#[test]
fn zero_velocity_copies_the_last_observed_frame() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 14);
    for clip in &corpus.clips {
        let p = zero_velocity_predict(clip).unwrap();
        assert_eq!(p.rows(), clip.t_pred());
        for h in 0..clip.t_pred() {
            for j in 0..clip.k {
                let (x, y) = clip.coord(clip.t_obs - 1, j);
                assert_eq!((p.get2(h, 2 * j), p.get2(h, 2 * j + 1)), (x, y));
            }
        }
        assert_eq!(ZeroVelocity.predict(clip).unwrap().skeleton.unwrap(), p);
    }
}

#[test]
fn perfect_oracle_scores_perfectly() {
    let cfg = common::small_generator(8);
    let corpus = common::corpus(&cfg, 15);
    let clips = corpus.split(Split::Val).unwrap();
    let topo = common::arch_for(&cfg, Variant::Main).topology;
    let (r, _) = evaluate(&Oracle, &clips, &topo, &EvalOptions::default(), &Sequential).unwrap();
    let g = r.geometry.unwrap();
    assert_eq!(g.all.mpjpe, 0.0);
    assert_eq!((g.all.pck05, g.all.pck10), (100.0, 100.0));
    for h in r.semantic.unwrap() {
        assert_eq!(h.accuracy, 100.0);
    }
}

#[test]
fn no_pose_head_refuses_geometric_evaluation() {
    let cfg = common::small_generator(4);
    let corpus = common::corpus(&cfg, 16);
    let clips = corpus.split(Split::Val).unwrap();
    let model = common::model_for(&cfg, Variant::NoPoseHead, 1);
    let r = evaluate(&model, &clips, &model.arch.topology, &EvalOptions::default(), &Sequential);
    assert_eq!(r.unwrap_err(), Error::NoPoseHead("no_pose_head".into()));
    let semantic = EvalOptions {
        geometric: false,
        ..EvalOptions::default()
    };
    let (r, _) = evaluate(&model, &clips, &model.arch.topology, &semantic, &Sequential).unwrap();
    assert!(r.geometry.is_none() && r.semantic.is_some());
}

#[test]
fn severed_variant_ignores_external_features() {
    let cfg = common::small_generator(4);
    let corpus = common::corpus(&cfg, 17);
    let model = common::model_for(&cfg, Variant::NoExtContext, 1);
    let clip = &corpus.clips[0];
    let base = factual(&model, clip);
    let iv = apply_intervention(&corpus, clip, &InterventionSpec::ExtSwapClip(None)).unwrap();
    let t = model.arch.rollout(&model.params, &iv.input, iv.injection, HistoryAccess::Truncated).unwrap();
    assert_eq!(t.skeleton, base.skeleton);
    assert_eq!(t.logits, base.logits);
}
