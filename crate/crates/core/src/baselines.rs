//! Baselines and ablations. Every variant consumes the same corpus and latent
//! interface; they differ only in how the rollout couples the two streams.

use alloc::format;

use crate::data::Clip;
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig, Variant};
use crate::numerics::Tensor;
use crate::objectives::LossWeights;
use crate::topology::Topology;

/// Copy-last-frame forecast: the last observed pose repeated over the future
/// window, `[T_pred, 2K]`.
pub fn zero_velocity_predict(clip: &Clip) -> Result<Tensor> {
    if clip.t_obs == 0 {
        return Err(Error::InvalidConfig("zero velocity needs at least one observed frame".into()));
    }
    let last = clip.coords_window(clip.t_obs - 1, 1);
    let tf = clip.t_pred();
    let mut out = alloc::vec::Vec::with_capacity(tf * last.len());
    for _ in 0..tf {
        out.extend_from_slice(last.data());
    }
    Ok(Tensor::matrix(tf, last.len(), out))
}

/// Default loss weights for a variant: the Gaussian transition gets a small
/// KL weight.
pub fn default_weights(variant: Variant) -> LossWeights {
    let mut w = LossWeights::default();
    if variant.gaussian() {
        w.kl = 1e-3;
    }
    w
}

/// Builds the trainable architecture of `variant`, rejecting combinations the
/// variant cannot honour.
pub fn build_variant(variant: Variant, config: ModelConfig, topology: Topology, weights: &LossWeights) -> Result<Architecture> {
    weights.validate()?;
    if weights.kl > 0.0 && !variant.gaussian() {
        return Err(Error::InvalidConfig(format!(
            "variant `{}` has a deterministic transition; the KL weight must be 0",
            variant
        )));
    }
    if variant.gaussian() && weights.kl == 0.0 {
        return Err(Error::InvalidConfig(format!("variant `{}` needs a positive KL weight", variant)));
    }
    Architecture::new(config, variant, topology)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_not_trainable() {
        let r = build_variant(
            Variant::ZeroVelocity,
            ModelConfig::new(8, 5, 1),
            Topology::toy(5),
            &LossWeights::default(),
        );
        assert_eq!(r, Err(Error::NotTrainable("zero_velocity".into())));
    }

    #[test]
    fn kl_weight_must_match_transition() {
        let t = Topology::toy(5);
        let c = ModelConfig::new(8, 5, 1);
        assert!(build_variant(Variant::Main, c.clone(), t.clone(), &default_weights(Variant::KlBottleneck)).is_err());
        assert!(build_variant(Variant::KlBottleneck, c.clone(), t.clone(), &LossWeights::default()).is_err());
        assert!(build_variant(Variant::KlBottleneck, c, t, &default_weights(Variant::KlBottleneck)).is_ok());
    }
}
