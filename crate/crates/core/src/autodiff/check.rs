use alloc::vec::Vec;

use super::{Array, Graph, ParameterStore, Var};
use crate::{Error, Result};

/// Outcome of [`check_gradients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Number of scalar entries compared.
    pub entries: usize,
}

/// Denominator floor of the relative error, so entries whose true gradient
/// is zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval<F>(store: &ParameterStore, inputs: &[Array], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let root = f(&mut g, &vars)?;
    let v = g.value(root);
    if v.len() != 1 {
        return Err(Error::NonScalarRoot(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against central
/// differences with step `h`, over every input entry and every parameter
/// entry of `store`.
pub fn check_gradients<F>(store: &ParameterStore, inputs: &[Array], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let root = f(&mut g, &vars)?;
    let grads = g.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut entries = 0;
    let mut perturbed: Vec<Array> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        for i in 0..inputs[k].len() {
            let analytic = grads.get(*var).map_or(0.0, |a| a.data()[i]);
            let x0 = inputs[k].data()[i];
            perturbed[k].data_mut()[i] = x0 + h;
            let up = eval(store, &perturbed, &f)?;
            perturbed[k].data_mut()[i] = x0 - h;
            let down = eval(store, &perturbed, &f)?;
            perturbed[k].data_mut()[i] = x0;
            worst = worst.max(rel_error(analytic, (up - down) / (2.0 * h)));
            entries += 1;
        }
    }

    let mut shifted = store.clone();
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        for i in 0..store.value(id).len() {
            let analytic = grads.param(id).map_or(0.0, |a| a.data()[i]);
            let p0 = store.value(id).data()[i];
            shifted.value_mut(id).data_mut()[i] = p0 + h;
            let up = eval(&shifted, inputs, &f)?;
            shifted.value_mut(id).data_mut()[i] = p0 - h;
            let down = eval(&shifted, inputs, &f)?;
            shifted.value_mut(id).data_mut()[i] = p0;
            worst = worst.max(rel_error(analytic, (up - down) / (2.0 * h)));
            entries += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        entries,
    })
}
