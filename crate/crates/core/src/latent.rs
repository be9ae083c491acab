//! Identity latent interface with learnable view embeddings.
//!
//! View 0 is the in-cabin camera; views `1..=V` are the external cameras.
//! Each view owns a `[1, D]` embedding named `view.{id}` that is added to the
//! raw feature. External latents are mean-pooled across views.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::data::Clip;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParameterSet, Tensor, Var};

pub const INTERNAL_VIEW: usize = 0;

pub fn view_param(view: usize) -> alloc::string::String {
    format!("view.{}", view)
}

/// Registers zero embeddings for the in-cabin view and `v` external views.
pub fn init_view_embeddings(ps: &mut ParameterSet, d: usize, v: usize) -> Result<()> {
    for id in 0..=v {
        ps.insert(&view_param(id), Tensor::zeros(&[1, d]), true)?;
    }
    Ok(())
}

fn embedding(params: &ParameterSet, view: usize) -> Result<&Tensor> {
    params.get(&view_param(view)).ok_or(Error::UnknownView(view))
}

pub fn apply_view_embedding(params: &ParameterSet, f: &[f64], view: usize) -> Result<Tensor> {
    let e = embedding(params, view)?;
    if e.len() != f.len() {
        return Err(Error::Shape {
            context: "view embedding".to_string(),
            expected: format!("{} features", e.len()),
            got: format!("{} features", f.len()),
        });
    }
    Ok(Tensor::row(f.iter().zip(e.data()).map(|(a, b)| a + b).collect()))
}

/// Mean over the rows of a `[V, D]` stack.
pub fn pool_external_views(z_views: &Tensor) -> Result<Tensor> {
    let (v, d) = match z_views.shape() {
        [v, d] => (*v, *d),
        other => {
            return Err(Error::Shape {
                context: "external views".to_string(),
                expected: "[V, D]".to_string(),
                got: format!("{:?}", other),
            })
        }
    };
    if v == 0 {
        return Err(Error::Empty("external views"));
    }
    let mut out = alloc::vec![0.0; d];
    for r in 0..v {
        for (o, x) in out.iter_mut().zip(z_views.row_slice(r)) {
            *o += x;
        }
    }
    Ok(Tensor::row(out.into_iter().map(|x| x / v as f64).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z_int: Tensor,
    pub z_ext_views: Tensor,
    pub z_ext_pooled: Tensor,
}

pub fn build_latent_states(clip: &Clip, params: &ParameterSet) -> Result<Vec<LatentState>> {
    let d = clip.d();
    let internal = clip.internal();
    let views: Vec<Tensor> = (0..clip.v()).map(|v| clip.external_view(v)).collect();
    (0..clip.t)
        .map(|t| {
            let z_int = apply_view_embedding(params, internal.row_slice(t), INTERNAL_VIEW)?;
            let mut stack = Vec::with_capacity(clip.v() * d);
            for (v, view) in views.iter().enumerate() {
                stack.extend_from_slice(apply_view_embedding(params, view.row_slice(t), v + 1)?.data());
            }
            let z_ext_views = Tensor::matrix(clip.v(), d, stack);
            let z_ext_pooled = pool_external_views(&z_ext_views)?;
            Ok(LatentState {
                z_int,
                z_ext_views,
                z_ext_pooled,
            })
        })
        .collect()
}

/// Adds the view embedding to a `[T, D]` feature block on the tape.
pub fn embed(g: &mut Graph<'_>, raw: Var, view: usize) -> Var {
    let e = g.param(&view_param(view));
    g.add(raw, e)
}

/// Mean of same-shaped latent blocks on the tape.
pub fn pool(g: &mut Graph<'_>, views: &[Var]) -> Var {
    assert!(!views.is_empty(), "pooling needs at least one view");
    let sum = g.add_all(views);
    g.scale(sum, 1.0 / views.len() as f64)
}
