//! Central finite-difference gradient checking.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-3;

/// Per-input relative errors between analytic and numerical gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂, ‖g_numeric‖₂)` per input
    /// (0 when both vanish).
    pub relative_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn evaluate<F>(build: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    build(&g, &vars)?.value().item()
}

/// Compares `build`'s backward pass against central differences with step `eps`
/// on every element of every input.
pub fn check_gradients<F>(build: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&g, &vars)?;
    loss.backward()?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| v.grad().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();

    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = input.data()[i];
            probe[k].data_mut()[i] = x0 + eps;
            let plus = evaluate(&build, &probe)?;
            probe[k].data_mut()[i] = x0 - eps;
            let minus = evaluate(&build, &probe)?;
            probe[k].data_mut()[i] = x0;
            *slot = (plus - minus) / (2.0 * eps);
        }
        let a = analytic[k].data();
        if !numeric.iter().chain(a).all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient for input {k}")));
        }
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = norm(a).max(norm(&numeric));
        relative_errors.push(if scale == 0.0 { 0.0 } else { diff / scale });
    }
    Ok(GradCheckReport { relative_errors })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
