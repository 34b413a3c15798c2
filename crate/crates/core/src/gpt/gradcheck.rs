use serde::Serialize;

use super::{GptParams, ModelError};
use crate::data::Batch;

/// Agreement between analytic and central-difference gradients for one tensor.
#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `‖a − n‖ / max(‖a‖, ‖n‖)`, or the absolute difference norm when both
    /// gradients vanish.
    pub rel_error: f64,
}

/// Below this norm a gradient counts as identically zero.
pub const ZERO_NORM: f64 = 1e-8;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale < ZERO_NORM {
        diff
    } else {
        diff / scale
    }
}

/// Compares [`GptParams::backward`] with central differences of step `h`
/// on every coordinate of every tensor.
pub fn gradient_check(params: &GptParams<f64>, batch: &Batch, h: f64) -> Result<Vec<TensorCheck>, ModelError> {
    let analytic = params.backward(batch)?.grads;
    let mut probe = params.clone();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let len = params.tensors()[ti].1.len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = params.tensors()[ti].1.data[i];
            probe.tensors_mut()[ti].1.data[i] = orig + h;
            let plus = probe.forward(batch)?.loss;
            probe.tensors_mut()[ti].1.data[i] = orig - h;
            let minus = probe.forward(batch)?.loss;
            probe.tensors_mut()[ti].1.data[i] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        let a = &analytic.tensors()[ti].1.data;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(TensorCheck {
            rel_error: relative_error(a, &numeric),
            analytic_norm: norm(a),
            numeric_norm: norm(&numeric),
            name,
        });
    }
    Ok(out)
}
