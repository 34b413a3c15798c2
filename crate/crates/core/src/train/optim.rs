use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::gpt::{GptParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// First and second moments plus the number of updates applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub step: u64,
    pub m: GptParams<T>,
    pub v: GptParams<T>,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &GptParams<T>) -> Self {
        OptimState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One AdamW update of a flat slice. `step` is the already incremented
/// update count used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
    cfg: &AdamWConfig,
    decay: bool,
) {
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let one = T::one();
    let c1 = T::lit(1.0 - cfg.beta1.powi(step as i32));
    let c2 = T::lit(1.0 - cfg.beta2.powi(step as i32));
    let eps = T::lit(cfg.eps);
    let lr = T::lit(lr);
    let wd = if decay { T::lit(cfg.weight_decay) } else { T::zero() };
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta[i]);
    }
}

/// Applies AdamW to every tensor. Weight decay only touches matrices.
pub fn adamw_step<T: Scalar>(
    params: &mut GptParams<T>,
    grads: &GptParams<T>,
    state: &mut OptimState<T>,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<(), TrainError> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.m)?;
    params.check_same_shape(&state.v)?;
    if lr.is_nan() || lr < 0.0 {
        return Err(TrainError::Config(format!("learning rate {lr} must be >= 0")));
    }
    state.step += 1;
    let step = state.step;
    let grads = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((_, theta), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        let decay = theta.is_matrix();
        adamw_update(&mut theta.data, &g.data, &mut m.data, &mut v.data, step, lr, cfg, decay);
    }
    Ok(())
}

/// Scales all slices together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(tensors: &mut [&mut [T]], max_norm: f64) -> f64 {
    let norm = tensors
        .iter()
        .flat_map(|t| t.iter())
        .map(|x| {
            let x = x.to_f64_lossy();
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = T::lit(max_norm / norm);
        for t in tensors.iter_mut() {
            for x in t.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// [`clip_global_norm`] over every gradient tensor.
pub fn gradient_clip<T: Scalar>(grads: &mut GptParams<T>, max_norm: f64) -> f64 {
    let mut slices: Vec<&mut [T]> = grads.tensors_mut().into_iter().map(|(_, t)| t.data.as_mut_slice()).collect();
    clip_global_norm(&mut slices, max_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_step_by_hand() {
        let (mut theta, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
        adamw_update(&mut theta, &[1.0], &mut m, &mut v, 1, 0.1, &AdamWConfig::default(), true);
        assert!((m[0] - 0.1).abs() < 1e-15);
        assert!((v[0] - 0.05).abs() < 1e-15);
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.1);
        assert!((theta[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_without_decay() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let (mut theta, mut m, mut v) = ([0.5f64, -2.0], [0.3, 0.1], [0.2, 0.4]);
        adamw_update(&mut theta, &[0.0, 0.0], &mut m, &mut v, 3, 0.1, &cfg, true);
        // theta moves by the decayed moment only; with m = 0 it would stay.
        assert_eq!(m, [0.9 * 0.3, 0.9 * 0.1]);
        let (mut t2, mut m2, mut v2) = ([0.5f64], [0.0], [0.0]);
        adamw_update(&mut t2, &[0.0], &mut m2, &mut v2, 1, 0.1, &cfg, true);
        assert_eq!(t2, [0.5]);
    }

    #[test]
    fn clip_three_four_five() {
        let mut g = [3.0f64, 4.0];
        let norm = clip_global_norm(&mut [&mut g[..]], 1.0);
        assert_eq!(norm, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = [0.3f64, 0.4];
        clip_global_norm(&mut [&mut small[..]], 1.0);
        assert_eq!(small, [0.3, 0.4]);
    }

    proptest! {
        #[test]
        fn clipped_norm_bounded(a in prop::collection::vec(-100.0f64..100.0, 1..50),
                                b in prop::collection::vec(-100.0f64..100.0, 0..50),
                                max in 0.01f64..10.0) {
            let (mut a, mut b) = (a, b);
            clip_global_norm(&mut [&mut a[..], &mut b[..]], max);
            let norm = a.iter().chain(&b).map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm <= max + 1e-6);
        }
    }
}
