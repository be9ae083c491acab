//! Gradients of scalar objectives and their finite-difference audit.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::params::ParameterSet;
use crate::error::{Error, Result};

/// A scalar objective recorded on a tape, with its named components.
pub struct Objective {
    pub total: Var,
    pub terms: Vec<(&'static str, Var)>,
}

impl Objective {
    pub fn single(total: Var) -> Self {
        Self {
            total,
            terms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradResult {
    pub loss: f64,
    pub terms: Vec<(&'static str, f64)>,
    pub grads: ParameterSet,
}

fn evaluate<F>(params: &ParameterSet, f: &mut F) -> Result<(f64, Vec<(&'static str, f64)>)>
where
    F: for<'g> FnMut(&mut Graph<'g>) -> Result<Objective>,
{
    let mut g = Graph::with_params(params);
    let obj = f(&mut g)?;
    let terms = read_terms(&g, &obj)?;
    Ok((g.scalar(obj.total), terms))
}

fn read_terms(g: &Graph<'_>, obj: &Objective) -> Result<Vec<(&'static str, f64)>> {
    let mut terms = Vec::with_capacity(obj.terms.len());
    for &(name, v) in &obj.terms {
        let x = g.scalar(v);
        if !x.is_finite() {
            return Err(Error::NonFiniteLoss { term: name.to_string() });
        }
        terms.push((name, x));
    }
    if !g.scalar(obj.total).is_finite() {
        return Err(Error::NonFiniteLoss {
            term: "total".to_string(),
        });
    }
    Ok(terms)
}

/// Value and gradient of the objective built by `f` with respect to every
/// trainable entry of `params`. Frozen entries get zero gradients.
pub fn grad_of_scalar<F>(params: &ParameterSet, mut f: F) -> Result<GradResult>
where
    F: for<'g> FnMut(&mut Graph<'g>) -> Result<Objective>,
{
    let mut g = Graph::with_params(params);
    let obj = f(&mut g)?;
    let terms = read_terms(&g, &obj)?;
    let loss = g.scalar(obj.total);
    let grads = g.param_grads(&g.backward(obj.total));
    for e in grads.iter() {
        if !e.tensor.is_finite() {
            return Err(Error::NonFiniteGradient { name: e.name.clone() });
        }
    }
    Ok(GradResult { loss, terms, grads })
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_abs_error: f64,
    /// Largest magnitude among analytic and numeric entries.
    pub scale: f64,
    /// `max_abs_error / scale`, or `max_abs_error` when `absolute` is set.
    pub error: f64,
    pub absolute: bool,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    pub step: f64,
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
}

impl FiniteDiffReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.error.partial_cmp(&b.error).unwrap_or(core::cmp::Ordering::Equal))
    }
}

/// Below this gradient magnitude a tensor is compared in absolute terms.
pub const ABSOLUTE_FLOOR: f64 = 1e-6;

/// Compares analytic gradients with central differences, entry by entry.
///
/// The error of a tensor is `max |analytic - numeric|` divided by the larger
/// of the two gradients' max-norms. When that norm is under
/// [`ABSOLUTE_FLOOR`] (a parameter the loss barely touches), the raw
/// absolute difference is reported instead.
pub fn finite_diff_check<F>(params: &ParameterSet, mut f: F, step: f64, tol: f64) -> Result<FiniteDiffReport>
where
    F: for<'g> FnMut(&mut Graph<'g>) -> Result<Objective>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = grad_of_scalar(params, &mut f)?.grads;
    let mut work = params.clone();
    let mut tensors = Vec::new();
    for i in 0..params.len() {
        let entry = params.entry(i);
        if !entry.trainable {
            continue;
        }
        let a = analytic.entry(i).tensor.data();
        let mut max_abs_error: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (j, &aj) in a.iter().enumerate() {
            let x0 = entry.tensor.data()[j];
            work.entry_mut(i).tensor.data_mut()[j] = x0 + step;
            let (fp, _) = evaluate(&work, &mut f)?;
            work.entry_mut(i).tensor.data_mut()[j] = x0 - step;
            let (fm, _) = evaluate(&work, &mut f)?;
            work.entry_mut(i).tensor.data_mut()[j] = x0;
            let n = (fp - fm) / (2.0 * step);
            max_abs_error = max_abs_error.max((aj - n).abs());
            scale = scale.max(aj.abs()).max(n.abs());
        }
        let absolute = scale < ABSOLUTE_FLOOR;
        let error = if absolute { max_abs_error } else { max_abs_error / scale };
        tensors.push(TensorCheck {
            name: entry.name.clone(),
            max_abs_error,
            scale,
            error,
            absolute,
            passed: error <= tol,
        });
    }
    Ok(FiniteDiffReport { step, tol, tensors })
}
