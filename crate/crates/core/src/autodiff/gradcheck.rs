//! Central finite-difference gradient checking.

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::Result;

/// Worst-case disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Relative error with a floor on the denominator so near-zero gradients are
/// judged absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Compare `d f / d inputs` from backward against central differences with
/// step `h`. `f` must build a scalar from the supplied input vars.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone().requires_grad(true)))
        .collect();
    let out = f(&g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |ins: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut worst = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    let mut probe = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let x0 = t.data()[j];
            probe[ti].data_mut()[j] = x0 + h;
            let fp = eval(&probe)?;
            probe[ti].data_mut()[j] = x0 - h;
            let fm = eval(&probe)?;
            probe[ti].data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[ti][j];
            worst.max_abs_err = worst.max_abs_err.max((a - numeric).abs());
            worst.max_rel_err = worst.max_rel_err.max(rel_err(a, numeric));
        }
    }
    Ok(worst)
}

/// Finite-difference check over every scalar in a parameter store. `f` builds
/// the scalar loss; its `bool` argument says whether parameters should be
/// bound as trainable (`true`) or as constants.
pub fn check_params<F>(params: &crate::autodiff::ParamStore, h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&Graph, &crate::autodiff::ParamStore, bool) -> Result<Var>,
{
    let g = Graph::new();
    let out = f(&g, params, true)?;
    g.backward(out)?;
    let mut analytic: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
    for (id, grad) in g.param_grads() {
        analytic[id]
            .iter_mut()
            .zip(&grad)
            .for_each(|(a, b)| *a += b);
    }
    let eval = |p: &crate::autodiff::ParamStore| -> Result<f64> {
        let g = Graph::new();
        let out = f(&g, p, false)?;
        Ok(g.scalar(out))
    };
    let mut worst = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    let mut probe = params.clone();
    let ids: Vec<_> = params.iter().map(|(id, _, t)| (id, t.len())).collect();
    for (id, len) in ids {
        for j in 0..len {
            let x0 = probe.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = x0 + h;
            let fp = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = x0 - h;
            let fm = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[id.0][j];
            worst.max_abs_err = worst.max_abs_err.max((a - numeric).abs());
            worst.max_rel_err = worst.max_rel_err.max(rel_err(a, numeric));
        }
    }
    Ok(worst)
}
