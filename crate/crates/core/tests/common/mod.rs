#![allow(dead_code)]

use driver_wm_core::data::{synth_generate_corpus, Corpus, GeneratorConfig};
use driver_wm_core::model::{Architecture, ModelConfig, Variant, WorldModel};
use driver_wm_core::topology::Topology;

pub fn micro_generator() -> GeneratorConfig {
    GeneratorConfig {
        t: 6,
        t_obs: 3,
        d: 8,
        k: 7,
        v: 2,
        n_train: 2,
        n_val: 1,
        n_test: 1,
        ..GeneratorConfig::default()
    }
}

pub fn small_generator(n: usize) -> GeneratorConfig {
    GeneratorConfig {
        t: 8,
        t_obs: 4,
        d: 16,
        k: 17,
        v: 3,
        n_train: n,
        n_val: n / 2,
        n_test: n / 2,
        ..GeneratorConfig::default()
    }
}

pub fn corpus(cfg: &GeneratorConfig, seed: u64) -> Corpus {
    synth_generate_corpus(cfg, seed).expect("generator")
}

pub fn arch_for(cfg: &GeneratorConfig, variant: Variant) -> Architecture {
    let mut mc = ModelConfig::new(cfg.d, cfg.k, cfg.v);
    mc.channels = 4;
    Architecture::new(mc, variant, Topology::toy(cfg.k)).expect("architecture")
}

pub fn model_for(cfg: &GeneratorConfig, variant: Variant, seed: u64) -> WorldModel {
    WorldModel::new(arch_for(cfg, variant), seed).expect("model")
}
