mod common;

use driver_wm_core::data::Split;
use driver_wm_core::model::{RolloutInput, RolloutOptions, Variant};
use driver_wm_core::numerics::{finite_diff_check, Objective, Rng};
use driver_wm_core::objectives::{clip_objective, LatentMode, LossWeights, ObjectiveConfig, Roi, Targets};

fn all_terms(latent_mode: LatentMode) -> ObjectiveConfig {
    ObjectiveConfig {
        weights: LossWeights {
            phys: 1.0,
            kl: 0.5,
            ..LossWeights::default()
        },
        latent_mode,
        roi: Roi {
            x_min: 0.45,
            x_max: 0.55,
            y_min: 0.45,
            y_max: 0.55,
        },
    }
}

fn check(variant: Variant, latent_mode: LatentMode) {
    let cfg = common::micro_generator();
    let corpus = common::corpus(&cfg, 3);
    let clips = corpus.split(Split::Train).unwrap();
    assert_eq!(clips.len(), 2);
    let model = common::model_for(&cfg, variant, 5);
    let arch = &model.arch;
    let samples: Vec<(RolloutInput, Targets)> = clips
        .iter()
        .map(|c| (RolloutInput::from_clip(c), Targets::from_clip(c)))
        .collect();
    let obj = all_terms(latent_mode);
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
                let (o, _, _) = clip_objective(arch, g, input, targets, &obj, &mut opts)?;
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
    .unwrap();
    assert!(report.tensors.len() == model.params.len());
    for t in &report.tensors {
        assert!(t.passed, "{}: {} error {:.3e} (scale {:.3e})", variant, t.name, t.error, t.scale);
    }
}

#[test]
fn gaussian_variant_with_every_term_enabled() {
    check(Variant::KlBottleneck, LatentMode::Direct);
}

#[test]
fn main_variant_velocity_latent_loss() {
    check(Variant::Main, LatentMode::Velocity);
}

#[test]
fn every_trainable_variant_differentiates() {
    for v in Variant::ALL {
        if v.trainable() && v != Variant::KlBottleneck && v != Variant::Main {
            check(v, LatentMode::Direct);
        }
    }
}
