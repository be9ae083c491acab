//! Dense tensors, parameters, the seeded generator, the reverse-mode tape and
//! the small neural building blocks everything else is made of.

pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_check, grad_of_scalar, FiniteDiffReport, Objective};
pub use graph::{Graph, Var};
pub use params::ParameterSet;
pub use rng::{Rng, RngState};
pub use tensor::Tensor;
