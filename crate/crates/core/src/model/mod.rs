//! The world model: architecture description, parameter layout, and the
//! variants used as baselines and ablations.

pub mod dynamics;
pub mod heads;
pub mod rollout;

use alloc::format;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};
use crate::latent;
use crate::numerics::nn::{self, Activation, MlpSpec};
use crate::numerics::{ParameterSet, Rng, Tensor};
use crate::topology::Topology;

pub use rollout::{HistoryAccess, Injection, RolloutInput, RolloutOptions, RolloutTrace, RolloutVars};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    Causal,
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Main,
    ZeroVelocity,
    StaticPooling,
    SingleStream,
    LateFusion,
    CrossAttnOnly,
    RssmGru,
    NoExtContext,
    NonCausalBidir,
    NoPoseHead,
    KlBottleneck,
}

/// How the internal transition is coupled to external context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// `(1 - g) * f_int(z) + g * m` with a learned vector gate.
    Gated,
    /// `f_int(z) + m`.
    Additive,
    /// A GRU cell with hidden state `z` and input `m`.
    Gru,
    /// `f_int(z)` alone; external stream unused.
    Independent,
    /// Independent internal and external rollouts joined at the decoder.
    LateFusion,
    /// One pose from time-averaged observed features.
    Static,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Main,
        Variant::ZeroVelocity,
        Variant::StaticPooling,
        Variant::SingleStream,
        Variant::LateFusion,
        Variant::CrossAttnOnly,
        Variant::RssmGru,
        Variant::NoExtContext,
        Variant::NonCausalBidir,
        Variant::NoPoseHead,
        Variant::KlBottleneck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Main => "main",
            Variant::ZeroVelocity => "zero_velocity",
            Variant::StaticPooling => "static_pooling",
            Variant::SingleStream => "single_stream",
            Variant::LateFusion => "late_fusion",
            Variant::CrossAttnOnly => "cross_attn_only",
            Variant::RssmGru => "rssm_gru",
            Variant::NoExtContext => "no_ext_context",
            Variant::NonCausalBidir => "non_causal_bidir",
            Variant::NoPoseHead => "no_pose_head",
            Variant::KlBottleneck => "kl_bottleneck",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }

    pub fn code(self) -> u32 {
        Self::ALL.iter().position(|&v| v == self).unwrap() as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn trainable(self) -> bool {
        self != Variant::ZeroVelocity
    }

    pub fn coupling(self) -> Coupling {
        match self {
            Variant::StaticPooling => Coupling::Static,
            Variant::SingleStream | Variant::ZeroVelocity => Coupling::Independent,
            Variant::LateFusion => Coupling::LateFusion,
            Variant::CrossAttnOnly => Coupling::Additive,
            Variant::RssmGru => Coupling::Gru,
            _ => Coupling::Gated,
        }
    }

    pub fn attention_mode(self) -> AttentionMode {
        if self == Variant::NonCausalBidir {
            AttentionMode::Bidirectional
        } else {
            AttentionMode::Causal
        }
    }

    pub fn has_pose_head(self) -> bool {
        self != Variant::NoPoseHead
    }

    pub fn gaussian(self) -> bool {
        self == Variant::KlBottleneck
    }

    /// External inputs are replaced by zeros in training and evaluation.
    pub fn severs_external(self) -> bool {
        self == Variant::NoExtContext
    }

    pub fn uses_context(self) -> bool {
        matches!(self.coupling(), Coupling::Gated | Coupling::Additive | Coupling::Gru)
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub k: usize,
    pub v: usize,
    pub heads: usize,
    pub queries: usize,
    pub rank: usize,
    pub channels: usize,
    pub log_sigma_min: f64,
    pub log_sigma_max: f64,
    /// Initial bias of the gate's output layer; negative starts the gate
    /// mostly closed.
    pub gate_bias: f64,
}

impl ModelConfig {
    pub fn new(d: usize, k: usize, v: usize) -> Self {
        Self {
            d,
            k,
            v,
            heads: 4,
            queries: 4,
            rank: (d / 4).max(1),
            channels: 16,
            log_sigma_min: -6.0,
            log_sigma_max: 2.0,
            gate_bias: -2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 || self.v == 0 || self.queries == 0 || self.rank == 0 || self.channels == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "d = {} is not divisible by {} heads",
                self.d, self.heads
            )));
        }
        if !(self.log_sigma_min < self.log_sigma_max) {
            return Err(Error::InvalidConfig("log sigma range is empty".into()));
        }
        Ok(())
    }

    pub(crate) fn residual_mlp(&self, name: &str) -> MlpSpec {
        MlpSpec::new(name, &[self.d, self.d, self.d], Activation::Tanh, Activation::Identity)
    }

    pub(crate) fn query_mlp(&self) -> MlpSpec {
        MlpSpec::new(
            "ctx.query",
            &[self.d, self.d, self.queries * self.d],
            Activation::Tanh,
            Activation::Identity,
        )
    }
}

/// Everything about a model except its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub variant: Variant,
    pub topology: Topology,
    adjacency: Tensor,
}

impl Architecture {
    pub fn new(config: ModelConfig, variant: Variant, topology: Topology) -> Result<Self> {
        config.validate()?;
        if topology.k() != config.k {
            return Err(Error::Shape {
                context: "topology".to_string(),
                expected: format!("{} joints", config.k),
                got: format!("{} joints", topology.k()),
            });
        }
        if !variant.trainable() {
            return Err(Error::NotTrainable(variant.name().into()));
        }
        let adjacency = topology.normalized_adjacency();
        Ok(Self {
            config,
            variant,
            topology,
            adjacency,
        })
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Fresh parameters: uniform `±1/√fan_in`, view embeddings at zero.
    pub fn init_params(&self, seed: u64) -> Result<ParameterSet> {
        let c = &self.config;
        let d = c.d;
        let mut rng = Rng::new(seed);
        let mut ps = ParameterSet::new();
        latent::init_view_embeddings(&mut ps, d, c.v)?;
        let coupling = self.variant.coupling();
        if self.variant.uses_context() {
            for stream in ["pre.int", "pre.ext"] {
                for p in ["q", "k", "v", "o"] {
                    nn::init_linear(&mut ps, &mut rng, &format!("{}.{}", stream, p), d, d)?;
                }
            }
            nn::init_mlp(&mut ps, &mut rng, &c.query_mlp())?;
            for p in ["ctx.k", "ctx.v"] {
                nn::init_linear(&mut ps, &mut rng, &format!("{}.0", p), d, c.rank)?;
                nn::init_linear(&mut ps, &mut rng, &format!("{}.1", p), c.rank, d)?;
            }
            nn::init_linear(&mut ps, &mut rng, "ctx.o", c.queries * d, d)?;
        }
        if coupling != Coupling::Gru && coupling != Coupling::Static {
            nn::init_mlp(&mut ps, &mut rng, &c.residual_mlp("f_int"))?;
            if self.variant.gaussian() {
                nn::init_linear(&mut ps, &mut rng, "f_int.log_sigma", d, d)?;
            }
        }
        if !matches!(coupling, Coupling::Independent | Coupling::Static) {
            nn::init_mlp(&mut ps, &mut rng, &c.residual_mlp("f_ext"))?;
        }
        if coupling == Coupling::Gated {
            let spec = c.residual_mlp("gate");
            nn::init_mlp(&mut ps, &mut rng, &spec)?;
            let bias = format!("{}.b", spec.layer_name(spec.layers() - 1));
            ps.get_mut(&bias).expect("gate bias").data_mut().fill(c.gate_bias);
        }
        if coupling == Coupling::Gru {
            for gate in ["z", "r", "n"] {
                nn::init_linear(&mut ps, &mut rng, &format!("gru.{}.x", gate), d, d)?;
                nn::init_linear(&mut ps, &mut rng, &format!("gru.{}.h", gate), d, d)?;
            }
        }
        if coupling == Coupling::Static {
            nn::init_linear(&mut ps, &mut rng, "static.fuse", d, d)?;
        }
        if self.variant.has_pose_head() {
            let lift_in = if coupling == Coupling::LateFusion { 2 * d } else { d };
            nn::init_linear(&mut ps, &mut rng, "dec.lift", lift_in, c.k * c.channels)?;
            nn::init_linear(&mut ps, &mut rng, "dec.gcn.0", c.channels, c.channels)?;
            nn::init_linear(&mut ps, &mut rng, "dec.gcn.1", c.channels, c.channels)?;
            nn::init_linear(&mut ps, &mut rng, "dec.out", c.channels, 2)?;
        }
        for (head, classes) in heads::HEADS {
            nn::init_linear(&mut ps, &mut rng, &format!("head.{}", head), d, classes)?;
        }
        Ok(ps)
    }

    /// Checks that `params` has exactly the layout `init_params` produces.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        self.init_params(0)?.check_layout(params)
    }
}

/// An architecture with concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub arch: Architecture,
    pub params: ParameterSet,
}

impl WorldModel {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let params = arch.init_params(seed)?;
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: ParameterSet) -> Result<Self> {
        arch.check_params(&params)?;
        Ok(Self { arch, params })
    }

    pub fn variant(&self) -> Variant {
        self.arch.variant
    }

    pub fn describe(&self) -> String {
        format!(
            "{} (d={}, k={}, v={}, {} parameters)",
            self.arch.variant,
            self.arch.config.d,
            self.arch.config.k,
            self.arch.config.v,
            self.params.num_scalars()
        )
    }
}
