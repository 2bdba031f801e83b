//! Finite-difference verification of graph gradients.
//!
//! Always runs in 64-bit precision: the builder is monomorphic over
//! `Graph<f64>`.

use crate::autodiff::{Graph, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Per-input and overall maxima of `|a−n| / max(1, |a|, |n|)`, where `a` is
/// the autodiff gradient and `n` the central difference.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_input: Vec<f64>,
    pub max_rel_error: f64,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

fn evaluate<F>(build: &F, inputs: &[Tensor<f64>], with_grad: bool) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            if with_grad {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let loss = build(&mut g, &vars)?;
    let value = g.value(loss).item()?;
    if !value.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    let grads = vars
        .iter()
        .map(|&v| g.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    Ok((value, grads))
}

/// Compares autodiff gradients of `build` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every coordinate of every input.
pub fn grad_check_many<F>(build: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (_, analytic) = evaluate(&build, inputs, true)?;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    for (which, grads) in analytic.iter().enumerate() {
        let mut worst = 0f64;
        for (k, &a) in grads.iter().enumerate() {
            let orig = inputs[which].data()[k];
            work[which].data_mut()[k] = orig + h;
            let (plus, _) = evaluate(&build, &work, false)?;
            work[which].data_mut()[k] = orig - h;
            let (minus, _) = evaluate(&build, &work, false)?;
            work[which].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(a, numeric));
        }
        per_input.push(worst);
    }
    let max_rel_error = per_input.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_input,
        max_rel_error,
    })
}

/// Single-input form of [`grad_check_many`]; returns the max relative error.
pub fn grad_check<F>(build: F, theta: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let report = grad_check_many(|g, vars| build(g, vars[0]), std::slice::from_ref(theta), h)?;
    Ok(report.max_rel_error)
}
