//! Skeleton decoder and clip-level classification heads.
//!
//! The decoder lifts each latent linearly to `K x C` joint features, runs two
//! residual graph convolutions `X + tanh(Â X W + b)` over the normalized
//! adjacency `Â`, and maps every joint to `(x, y)` through a sigmoid. A batch of `n` latents is
//! decoded at once through the block-diagonal `I_n ⊗ Â`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;

use crate::error::{Error, Result};
use crate::numerics::nn;
use crate::numerics::{Graph, ParameterSet, Tensor, Var};
use crate::topology::Topology;

/// Head names with their class counts. `dbr` and `der` read the internal
/// latent, `tcr` and `vcr` the pooled external latent.
pub const HEADS: [(&str, usize); 4] = [("dbr", 7), ("der", 5), ("tcr", 3), ("vcr", 5)];

/// `I_n ⊗ a` for a square `a`.
pub fn block_diagonal(a: &Tensor, n: usize) -> Tensor {
    let k = a.rows();
    let w = n * k;
    let mut out = vec![0.0; w * w];
    for b in 0..n {
        for i in 0..k {
            for j in 0..k {
                out[(b * k + i) * w + b * k + j] = a.get2(i, j);
            }
        }
    }
    Tensor::matrix(w, w, out)
}

/// Graph convolution `tanh(Â X W + b)`.
pub fn graph_conv(g: &mut Graph<'_>, name: &str, adjacency: Var, x: Var) -> Var {
    let w = g.param(&format!("{}.w", name));
    let b = g.param(&format!("{}.b", name));
    let xw = g.matmul(x, w);
    let axw = g.matmul(adjacency, xw);
    let pre = g.add(axw, b);
    g.tanh(pre)
}

/// Decodes `[n, D_in]` latents to `[n, 2K]` normalized coordinates.
pub fn decode(g: &mut Graph<'_>, adjacency: &Tensor, k: usize, channels: usize, z: Var) -> Var {
    let (n, _) = g.shape(z);
    let lift = nn::linear(g, "dec.lift", z);
    let x = g.reshape(lift, n * k, channels);
    let a = g.constant(block_diagonal(adjacency, n));
    let h = graph_conv(g, "dec.gcn.0", a, x);
    let h = g.add(x, h);
    let h2 = graph_conv(g, "dec.gcn.1", a, h);
    let h = g.add(h, h2);
    let out = nn::linear(g, "dec.out", h);
    let out = g.sigmoid(out);
    g.reshape(out, n, 2 * k)
}

/// Logits of one head for a `[1, D]` latent.
pub fn classify(g: &mut Graph<'_>, head: &str, z: Var) -> Var {
    nn::linear(g, &format!("head.{}", head), z)
}

fn latent_row(z: &Tensor, d: usize) -> Result<Tensor> {
    if z.len() != d {
        return Err(Error::Shape {
            context: "latent".to_string(),
            expected: format!("{} entries", d),
            got: format!("{:?}", z.shape()),
        });
    }
    Ok(Tensor::matrix(1, d, z.data().to_vec()))
}

/// `[K, 2]` normalized coordinates for one latent.
pub fn decode_skeleton(params: &ParameterSet, topology: &Topology, channels: usize, z: &Tensor) -> Result<Tensor> {
    let lift = params.require("dec.lift.w")?;
    let k = topology.k();
    if lift.cols() != k * channels {
        return Err(Error::Shape {
            context: "dec.lift".to_string(),
            expected: format!("{} joint channels", k * channels),
            got: format!("{}", lift.cols()),
        });
    }
    let z = latent_row(z, lift.rows())?;
    let mut g = Graph::with_params(params);
    let zv = g.constant(z);
    let adjacency = topology.normalized_adjacency();
    let y = decode(&mut g, &adjacency, k, channels, zv);
    g.value(y).clone().reshaped(&[k, 2])
}

fn classify_pair(params: &ParameterSet, z: &Tensor, heads: [&str; 2]) -> Result<(Tensor, Tensor)> {
    let d = params.require(&format!("head.{}.w", heads[0]))?.rows();
    let z = latent_row(z, d)?;
    let mut g = Graph::with_params(params);
    let zv = g.constant(z);
    let a = classify(&mut g, heads[0], zv);
    let b = classify(&mut g, heads[1], zv);
    Ok((g.value(a).clone(), g.value(b).clone()))
}

/// Internal latent type for the driver heads.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalLatent(pub Tensor);

/// Pooled external latent type for the traffic heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalLatent(pub Tensor);

/// `(dbr, der)` logits.
pub fn classify_internal(params: &ParameterSet, z: &InternalLatent) -> Result<(Tensor, Tensor)> {
    classify_pair(params, &z.0, ["dbr", "der"])
}

/// `(tcr, vcr)` logits.
pub fn classify_external(params: &ParameterSet, z: &ExternalLatent) -> Result<(Tensor, Tensor)> {
    classify_pair(params, &z.0, ["tcr", "vcr"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig, Variant};
    use crate::numerics::Rng;

    #[test]
    fn decoded_coordinates_inside_unit_square() {
        let arch = Architecture::new(ModelConfig::new(8, 17, 2), Variant::Main, Topology::toy(17)).unwrap();
        let ps = arch.init_params(1).unwrap();
        let mut rng = Rng::new(2);
        for _ in 0..5 {
            let z = Tensor::row((0..8).map(|_| 3.0 * rng.normal()).collect());
            let s = decode_skeleton(&ps, &arch.topology, 16, &z).unwrap();
            assert!(s.data().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn zero_heads_give_uniform_logits() {
        let arch = Architecture::new(ModelConfig::new(8, 5, 1), Variant::Main, Topology::toy(5)).unwrap();
        let mut ps = arch.init_params(1).unwrap();
        for (h, _) in HEADS {
            ps.get_mut(&format!("head.{}.w", h)).unwrap().data_mut().fill(0.0);
            ps.get_mut(&format!("head.{}.b", h)).unwrap().data_mut().fill(0.0);
        }
        let z = Tensor::row(vec![1.0; 8]);
        let (a, b) = classify_internal(&ps, &InternalLatent(z.clone())).unwrap();
        assert!(a.data().iter().chain(b.data()).all(|&x| x == 0.0));
        let (c, d) = classify_external(&ps, &ExternalLatent(z)).unwrap();
        assert_eq!((c.len(), d.len()), (3, 5));
    }
}
