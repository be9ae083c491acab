//! Traffic-conditioned latent world model for in-cabin driver dynamics.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: a small dense tensor library with a reverse-mode tape, the
//! dual-stream gated-injection dynamics core, skeleton and semantic heads, the
//! objective, the AdamW training loop, the metric suite, the synthetic
//! causally-coupled corpus generator and the intervention harness.
//!
//! File formats, configuration files and the command line live in the
//! `driver-wm` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod interventions;
pub mod latent;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod topology;
pub mod training;

pub use error::{Error, Result};
