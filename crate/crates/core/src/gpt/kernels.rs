//! Dense kernels. Each output element is produced by one thread in a fixed
//! summation order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::Scalar;

/// Below this many multiply-adds a kernel runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

pub const LN_EPS: f64 = 1e-5;

fn for_rows<T: Send>(out: &mut [T], row: usize, work: usize, f: impl Fn(usize, &mut [T]) + Sync + Send) {
    if row == 0 {
        return;
    }
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(row).enumerate().for_each(|(i, r)| f(i, r));
    } else {
        out.chunks_mut(row).enumerate().for_each(|(i, r)| f(i, r));
    }
}

/// `x (n×k) · w (k×m) + bias`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for_rows(&mut out, m, n * k * m, |i, row| {
        if let Some(b) = bias {
            row.copy_from_slice(b);
        }
        let xi = &x[i * k..(i + 1) * k];
        for (p, &xv) in xi.iter().enumerate() {
            let wp = &w[p * m..(p + 1) * m];
            for (o, &wv) in row.iter_mut().zip(wp) {
                *o += xv * wv;
            }
        }
    });
    out
}

/// Accumulates the gradients of [`linear`]: `dx += dout · wᵀ`,
/// `dw += xᵀ · dout`, `db += Σ_rows dout`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    dout: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    k: usize,
    m: usize,
    dx: &mut [T],
    dw: &mut [T],
    db: Option<&mut [T]>,
) {
    for_rows(dx, k, n * k * m, |i, dxi| {
        let di = &dout[i * m..(i + 1) * m];
        for (p, d) in dxi.iter_mut().enumerate() {
            let wp = &w[p * m..(p + 1) * m];
            let mut acc = T::zero();
            for (&a, &b) in di.iter().zip(wp) {
                acc += a * b;
            }
            *d += acc;
        }
    });
    for_rows(dw, m, n * k * m, |p, dwp| {
        for i in 0..n {
            let xv = x[i * k + p];
            let di = &dout[i * m..(i + 1) * m];
            for (g, &d) in dwp.iter_mut().zip(di) {
                *g += xv * d;
            }
        }
    });
    if let Some(db) = db {
        for i in 0..n {
            for (g, &d) in db.iter_mut().zip(&dout[i * m..(i + 1) * m]) {
                *g += d;
            }
        }
    }
}

/// `x (n×k) · wᵀ` with `w` stored `(m×k)`.
pub fn matmul_transposed<T: Scalar>(x: &[T], w: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for_rows(&mut out, m, n * k * m, |i, row| {
        let xi = &x[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let wj = &w[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&a, &b) in xi.iter().zip(wj) {
                acc += a * b;
            }
            *o = acc;
        }
    });
    out
}

/// Gradients of [`matmul_transposed`]: `dx += dout · w`, `dw += doutᵀ · x`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_transposed_backward<T: Scalar>(
    dout: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    k: usize,
    m: usize,
    dx: &mut [T],
    dw: &mut [T],
) {
    for_rows(dx, k, n * k * m, |i, dxi| {
        let di = &dout[i * m..(i + 1) * m];
        for (j, &d) in di.iter().enumerate() {
            let wj = &w[j * k..(j + 1) * k];
            for (g, &wv) in dxi.iter_mut().zip(wj) {
                *g += d * wv;
            }
        }
    });
    for_rows(dw, k, n * k * m, |j, dwj| {
        for i in 0..n {
            let d = dout[i * m + j];
            let xi = &x[i * k..(i + 1) * k];
            for (g, &xv) in dwj.iter_mut().zip(xi) {
                *g += d * xv;
            }
        }
    });
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], c: usize) -> (Vec<T>, NormCache<T>) {
    let n = x.len() / c;
    let eps = T::lit(LN_EPS);
    let inv_c = T::one() / T::lit(c as f64);
    let mut out = vec![T::zero(); n * c];
    let mut xhat = vec![T::zero(); n * c];
    let mut rstd = vec![T::zero(); n];
    for i in 0..n {
        let xi = &x[i * c..(i + 1) * c];
        let mean = xi.iter().copied().sum::<T>() * inv_c;
        let var = xi.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        for j in 0..c {
            let h = (xi[j] - mean) * r;
            xhat[i * c + j] = h;
            out[i * c + j] = gain[j] * h + bias[j];
        }
    }
    (out, NormCache { xhat, rstd })
}

/// Accumulates `dx`, `dgain`, `dbias` for [`layer_norm`].
pub fn layer_norm_backward<T: Scalar>(
    dout: &[T],
    cache: &NormCache<T>,
    gain: &[T],
    c: usize,
    dx: &mut [T],
    dgain: &mut [T],
    dbias: &mut [T],
) {
    let n = dout.len() / c;
    let inv_c = T::one() / T::lit(c as f64);
    let mut dxhat = vec![T::zero(); c];
    for i in 0..n {
        let di = &dout[i * c..(i + 1) * c];
        let hi = &cache.xhat[i * c..(i + 1) * c];
        let mut mean_d = T::zero();
        let mut mean_dh = T::zero();
        for j in 0..c {
            dgain[j] += di[j] * hi[j];
            dbias[j] += di[j];
            dxhat[j] = di[j] * gain[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * hi[j];
        }
        mean_d *= inv_c;
        mean_dh *= inv_c;
        let r = cache.rstd[i];
        for j in 0..c {
            dx[i * c + j] += r * (dxhat[j] - mean_d - hi[j] * mean_dh);
        }
    }
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(u: T) -> T {
    let half = T::lit(0.5);
    let inner = T::lit(GELU_SCALE) * (u + T::lit(GELU_CUBIC) * u * u * u);
    half * u * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(u: T) -> T {
    let half = T::lit(0.5);
    let a = T::lit(GELU_SCALE);
    let b = T::lit(GELU_CUBIC);
    let th = (a * (u + b * u * u * u)).tanh();
    half * (T::one() + th) + half * u * (T::one() - th * th) * a * (T::one() + T::lit(3.0) * b * u * u)
}

/// In-place numerically stable softmax.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(row)))`.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_small() {
        // [1 2] · [[1 0 1],[0 1 1]] + [1 1 1] = [2 3 4]
        let out = linear(&[1.0, 2.0], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], Some(&[1.0, 1.0, 1.0]), 1, 2, 3);
        assert_eq!(out, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn transposed_matches_linear() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let w = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]; // (3×2) stored
        let wt = [0.1, 0.3, 0.5, 0.2, 0.4, 0.6]; // (2×3)
        assert_eq!(matmul_transposed(&x, &w, 2, 2, 3), linear(&x, &wt, None, 2, 2, 3));
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &u in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8, "{u}");
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut row = vec![1.0f64, 2.0, -5.0, 1000.0];
        softmax_in_place(&mut row);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_of_constant_row() {
        let (out, _) = layer_norm(&[3.0f64; 4], &[1.0; 4], &[0.5; 4], 4);
        assert_eq!(out, vec![0.5; 4]);
    }
}
