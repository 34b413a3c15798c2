use rayon::prelude::*;

use super::kernels::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, log_sum_exp,
    matmul_transposed, matmul_transposed_backward, softmax_in_place, NormCache,
};
use super::{GptParams, ModelError, Scalar};
use crate::data::Batch;

/// Logits `(batch, seq, vocab)` flattened row-major, plus the mean loss.
#[derive(Debug, Clone)]
pub struct ForwardResult<T> {
    pub batch_size: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub logits: Vec<T>,
    pub loss: T,
}

impl<T: Scalar> ForwardResult<T> {
    pub fn logits_at(&self, b: usize, t: usize) -> &[T] {
        let row = b * self.seq_len + t;
        &self.logits[row * self.vocab_size..(row + 1) * self.vocab_size]
    }
}

/// Mean loss and its gradient with respect to every parameter.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub loss: T,
    pub grads: GptParams<T>,
}

pub(crate) struct LayerCache<T> {
    x_in: Vec<T>,
    ln1: NormCache<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention probabilities `(batch, head, t, t)`, zero above the diagonal.
    pub(crate) att: Vec<T>,
    y: Vec<T>,
    ln2: NormCache<T>,
    h2: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
}

pub(crate) struct Activations<T> {
    batch: usize,
    seq: usize,
    pub(crate) layers: Vec<LayerCache<T>>,
    lnf: NormCache<T>,
    hf: Vec<T>,
    pub(crate) logits: Vec<T>,
}

fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    batch: usize,
    seq: usize,
    n_head: usize,
    c: usize,
) -> (Vec<T>, Vec<T>) {
    let hd = c / n_head;
    let scale = T::one() / T::lit(hd as f64).sqrt();
    let mut att = vec![T::zero(); batch * n_head * seq * seq];
    let mut y = vec![T::zero(); batch * seq * c];
    att.par_chunks_mut(n_head * seq * seq)
        .zip(y.par_chunks_mut(seq * c))
        .enumerate()
        .for_each(|(b, (att_b, y_b))| {
            let base = b * seq * c;
            let mut scores = vec![T::zero(); seq];
            for h in 0..n_head {
                let off = h * hd;
                for t in 0..seq {
                    let qt = &q[base + t * c + off..base + t * c + off + hd];
                    // Only positions j <= t are ever read.
                    for (j, s) in scores.iter_mut().enumerate().take(t + 1) {
                        let kj = &k[base + j * c + off..base + j * c + off + hd];
                        let dot: T = qt.iter().zip(kj).map(|(&a, &b)| a * b).sum();
                        *s = dot * scale;
                    }
                    softmax_in_place(&mut scores[..=t]);
                    let row = &mut att_b[(h * seq + t) * seq..(h * seq + t + 1) * seq];
                    row[..=t].copy_from_slice(&scores[..=t]);
                    let yt = &mut y_b[t * c + off..t * c + off + hd];
                    for (j, &p) in scores.iter().enumerate().take(t + 1) {
                        let vj = &v[base + j * c + off..base + j * c + off + hd];
                        for (o, &vv) in yt.iter_mut().zip(vj) {
                            *o += p * vv;
                        }
                    }
                }
            }
        });
    (att, y)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Scalar>(
    dy: &[T],
    cache: &LayerCache<T>,
    batch: usize,
    seq: usize,
    n_head: usize,
    c: usize,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let hd = c / n_head;
    let scale = T::one() / T::lit(hd as f64).sqrt();
    let (q, k, v, att) = (&cache.q, &cache.k, &cache.v, &cache.att);
    dq.par_chunks_mut(seq * c)
        .zip(dk.par_chunks_mut(seq * c))
        .zip(dv.par_chunks_mut(seq * c))
        .enumerate()
        .take(batch)
        .for_each(|(b, ((dq_b, dk_b), dv_b))| {
            let base = b * seq * c;
            let mut dp = vec![T::zero(); seq];
            for h in 0..n_head {
                let off = h * hd;
                for t in 0..seq {
                    let p = &att[((b * n_head + h) * seq + t) * seq..((b * n_head + h) * seq + t + 1) * seq];
                    let dyt = &dy[base + t * c + off..base + t * c + off + hd];
                    let mut weighted = T::zero();
                    for j in 0..=t {
                        let vj = &v[base + j * c + off..base + j * c + off + hd];
                        dp[j] = dyt.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                        weighted += p[j] * dp[j];
                        let dvj = &mut dv_b[j * c + off..j * c + off + hd];
                        for (g, &d) in dvj.iter_mut().zip(dyt) {
                            *g += p[j] * d;
                        }
                    }
                    let qt = &q[base + t * c + off..base + t * c + off + hd];
                    for j in 0..=t {
                        let ds = p[j] * (dp[j] - weighted) * scale;
                        let kj = &k[base + j * c + off..base + j * c + off + hd];
                        let dqt = &mut dq_b[t * c + off..t * c + off + hd];
                        for (g, &kv) in dqt.iter_mut().zip(kj) {
                            *g += ds * kv;
                        }
                        let dkj = &mut dk_b[j * c + off..j * c + off + hd];
                        for (g, &qv) in dkj.iter_mut().zip(qt) {
                            *g += ds * qv;
                        }
                    }
                }
            }
        });
}

impl<T: Scalar> GptParams<T> {
    fn check_tokens(&self, ids: &[u32]) -> Result<(), ModelError> {
        let vocab_size = self.config.vocab_size;
        match ids.iter().find(|&&id| id as usize >= vocab_size) {
            Some(&id) => Err(ModelError::TokenOutOfRange { id, vocab_size }),
            None => Ok(()),
        }
    }

    fn check_shape(&self, inputs: &[u32], batch: usize, seq: usize) -> Result<(), ModelError> {
        if seq == 0 || batch == 0 {
            return Err(ModelError::Input("empty batch".to_string()));
        }
        if seq > self.config.context_len {
            return Err(ModelError::SequenceTooLong {
                seq,
                context_len: self.config.context_len,
            });
        }
        if inputs.len() != batch * seq {
            return Err(ModelError::Input(format!(
                "{} input ids do not form a {batch}×{seq} batch",
                inputs.len()
            )));
        }
        self.check_tokens(inputs)
    }

    pub(crate) fn activations(&self, inputs: &[u32], batch: usize, seq: usize) -> Result<Activations<T>, ModelError> {
        self.check_shape(inputs, batch, seq)?;
        let cfg = &self.config;
        let (c, v) = (cfg.d_model, cfg.vocab_size);
        let n = batch * seq;
        let f = 4 * c;

        let mut x = vec![T::zero(); n * c];
        for (row, &id) in inputs.iter().enumerate() {
            let t = row % seq;
            let te = &self.token_embedding.data[id as usize * c..(id as usize + 1) * c];
            let pe = &self.position_embedding.data[t * c..(t + 1) * c];
            for (j, o) in x[row * c..(row + 1) * c].iter_mut().enumerate() {
                *o = te[j] + pe[j];
            }
        }

        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (h1, ln1) = layer_norm(&x, &layer.attn_norm_gain.data, &layer.attn_norm_bias.data, c);
            let q = linear(&h1, &layer.query.data, Some(&layer.query_bias.data), n, c, c);
            let k = linear(&h1, &layer.key.data, Some(&layer.key_bias.data), n, c, c);
            let vv = linear(&h1, &layer.value.data, Some(&layer.value_bias.data), n, c, c);
            let (att, y) = attention_forward(&q, &k, &vv, batch, seq, cfg.n_head, c);
            let a = linear(&y, &layer.attn_out.data, Some(&layer.attn_out_bias.data), n, c, c);
            let x_mid: Vec<T> = x.iter().zip(&a).map(|(&r, &d)| r + d).collect();
            let (h2, ln2) = layer_norm(&x_mid, &layer.mlp_norm_gain.data, &layer.mlp_norm_bias.data, c);
            let u = linear(&h2, &layer.mlp_in.data, Some(&layer.mlp_in_bias.data), n, c, f);
            let g: Vec<T> = u.iter().map(|&z| gelu(z)).collect();
            let m = linear(&g, &layer.mlp_out.data, Some(&layer.mlp_out_bias.data), n, f, c);
            let x_out: Vec<T> = x_mid.iter().zip(&m).map(|(&r, &d)| r + d).collect();
            layers.push(LayerCache {
                x_in: std::mem::replace(&mut x, x_out),
                ln1,
                h1,
                q,
                k,
                v: vv,
                att,
                y,
                ln2,
                h2,
                u,
                g,
            });
        }

        let (hf, lnf) = layer_norm(&x, &self.final_norm_gain.data, &self.final_norm_bias.data, c);
        let logits = matmul_transposed(&hf, &self.token_embedding.data, n, c, v);
        Ok(Activations {
            batch,
            seq,
            layers,
            lnf,
            hf,
            logits,
        })
    }

    /// Logits for `inputs` laid out as `batch × seq`.
    pub fn logits(&self, inputs: &[u32], batch: usize, seq: usize) -> Result<Vec<T>, ModelError> {
        Ok(self.activations(inputs, batch, seq)?.logits)
    }

    fn loss_weights(&self, batch: &Batch, mask: Option<&[u8]>) -> Result<Vec<T>, ModelError> {
        if batch.targets.len() != batch.inputs.len() {
            return Err(ModelError::Input("targets and inputs differ in length".to_string()));
        }
        self.check_tokens(&batch.targets)?;
        match mask {
            None => Ok(vec![T::one(); batch.targets.len()]),
            Some(mask) => {
                if mask.len() != batch.targets.len() {
                    return Err(ModelError::Input(format!(
                        "loss mask has {} entries for {} targets",
                        mask.len(),
                        batch.targets.len()
                    )));
                }
                if mask.iter().all(|&m| m == 0) {
                    return Err(ModelError::Input("loss mask selects no position".to_string()));
                }
                Ok(mask.iter().map(|&m| if m != 0 { T::one() } else { T::zero() }).collect())
            }
        }
    }

    /// Weighted mean cross-entropy and its logit gradient.
    fn loss_and_dlogits(&self, logits: &[T], targets: &[u32], weights: &[T], want_grad: bool) -> (T, Vec<T>) {
        let vocab = self.config.vocab_size;
        let total: T = weights.iter().copied().sum();
        let mut loss = T::zero();
        let mut dlogits = if want_grad { vec![T::zero(); logits.len()] } else { Vec::new() };
        for (row, (&target, &w)) in targets.iter().zip(weights).enumerate() {
            if w == T::zero() {
                continue;
            }
            let l = &logits[row * vocab..(row + 1) * vocab];
            loss += w * (log_sum_exp(l) - l[target as usize]);
            if want_grad {
                let d = &mut dlogits[row * vocab..(row + 1) * vocab];
                d.copy_from_slice(l);
                softmax_in_place(d);
                d[target as usize] -= T::one();
                let scale = w / total;
                for g in d.iter_mut() {
                    *g *= scale;
                }
            }
        }
        (loss / total, dlogits)
    }

    /// Logits and mean next-token cross-entropy over every position.
    pub fn forward(&self, batch: &Batch) -> Result<ForwardResult<T>, ModelError> {
        self.forward_impl(batch, None)
    }

    /// Like [`GptParams::forward`], averaging the loss only over target
    /// positions whose mask entry is non-zero.
    pub fn forward_masked(&self, batch: &Batch, mask: &[u8]) -> Result<ForwardResult<T>, ModelError> {
        self.forward_impl(batch, Some(mask))
    }

    fn forward_impl(&self, batch: &Batch, mask: Option<&[u8]>) -> Result<ForwardResult<T>, ModelError> {
        let weights = self.loss_weights(batch, mask)?;
        let acts = self.activations(&batch.inputs, batch.batch_size, batch.context_len)?;
        let (loss, _) = self.loss_and_dlogits(&acts.logits, &batch.targets, &weights, false);
        Ok(ForwardResult {
            batch_size: batch.batch_size,
            seq_len: batch.context_len,
            vocab_size: self.config.vocab_size,
            logits: acts.logits,
            loss,
        })
    }

    /// Analytic gradient of the mean loss.
    pub fn backward(&self, batch: &Batch) -> Result<Backward<T>, ModelError> {
        self.backward_impl(batch, None)
    }

    pub fn backward_masked(&self, batch: &Batch, mask: &[u8]) -> Result<Backward<T>, ModelError> {
        self.backward_impl(batch, Some(mask))
    }

    fn backward_impl(&self, batch: &Batch, mask: Option<&[u8]>) -> Result<Backward<T>, ModelError> {
        let weights = self.loss_weights(batch, mask)?;
        let acts = self.activations(&batch.inputs, batch.batch_size, batch.context_len)?;
        let (loss, dlogits) = self.loss_and_dlogits(&acts.logits, &batch.targets, &weights, true);

        let cfg = &self.config;
        let (c, v) = (cfg.d_model, cfg.vocab_size);
        let (bsz, seq) = (acts.batch, acts.seq);
        let n = bsz * seq;
        let f = 4 * c;
        let mut grads = self.zeros_like();

        let mut dhf = vec![T::zero(); n * c];
        matmul_transposed_backward(
            &dlogits,
            &acts.hf,
            &self.token_embedding.data,
            n,
            c,
            v,
            &mut dhf,
            &mut grads.token_embedding.data,
        );
        let mut dx = vec![T::zero(); n * c];
        layer_norm_backward(
            &dhf,
            &acts.lnf,
            &self.final_norm_gain.data,
            c,
            &mut dx,
            &mut grads.final_norm_gain.data,
            &mut grads.final_norm_bias.data,
        );

        for (li, (layer, cache)) in self.layers.iter().zip(&acts.layers).enumerate().rev() {
            let lg = &mut grads.layers[li];

            // x_out = x_mid + mlp(ln2(x_mid))
            let mut dg = vec![T::zero(); n * f];
            linear_backward(
                &dx,
                &cache.g,
                &layer.mlp_out.data,
                n,
                f,
                c,
                &mut dg,
                &mut lg.mlp_out.data,
                Some(&mut lg.mlp_out_bias.data),
            );
            let du: Vec<T> = dg.iter().zip(&cache.u).map(|(&d, &u)| d * gelu_grad(u)).collect();
            let mut dh2 = vec![T::zero(); n * c];
            linear_backward(
                &du,
                &cache.h2,
                &layer.mlp_in.data,
                n,
                c,
                f,
                &mut dh2,
                &mut lg.mlp_in.data,
                Some(&mut lg.mlp_in_bias.data),
            );
            let mut dx_mid = dx.clone();
            layer_norm_backward(
                &dh2,
                &cache.ln2,
                &layer.mlp_norm_gain.data,
                c,
                &mut dx_mid,
                &mut lg.mlp_norm_gain.data,
                &mut lg.mlp_norm_bias.data,
            );

            // x_mid = x_in + attn(ln1(x_in))
            let mut dy = vec![T::zero(); n * c];
            linear_backward(
                &dx_mid,
                &cache.y,
                &layer.attn_out.data,
                n,
                c,
                c,
                &mut dy,
                &mut lg.attn_out.data,
                Some(&mut lg.attn_out_bias.data),
            );
            let mut dq = vec![T::zero(); n * c];
            let mut dk = vec![T::zero(); n * c];
            let mut dv = vec![T::zero(); n * c];
            attention_backward(&dy, cache, bsz, seq, cfg.n_head, c, &mut dq, &mut dk, &mut dv);
            let mut dh1 = vec![T::zero(); n * c];
            linear_backward(&dq, &cache.h1, &layer.query.data, n, c, c, &mut dh1, &mut lg.query.data, Some(&mut lg.query_bias.data));
            linear_backward(&dk, &cache.h1, &layer.key.data, n, c, c, &mut dh1, &mut lg.key.data, Some(&mut lg.key_bias.data));
            linear_backward(&dv, &cache.h1, &layer.value.data, n, c, c, &mut dh1, &mut lg.value.data, Some(&mut lg.value_bias.data));
            let mut dx_in = dx_mid;
            layer_norm_backward(
                &dh1,
                &cache.ln1,
                &layer.attn_norm_gain.data,
                c,
                &mut dx_in,
                &mut lg.attn_norm_gain.data,
                &mut lg.attn_norm_bias.data,
            );
            debug_assert_eq!(cache.x_in.len(), dx_in.len());
            dx = dx_in;
        }

        for (row, &id) in batch.inputs.iter().enumerate() {
            let t = row % seq;
            let d = &dx[row * c..(row + 1) * c];
            let te = &mut grads.token_embedding.data[id as usize * c..(id as usize + 1) * c];
            for (g, &dv) in te.iter_mut().zip(d) {
                *g += dv;
            }
            let pe = &mut grads.position_embedding.data[t * c..(t + 1) * c];
            for (g, &dv) in pe.iter_mut().zip(d) {
                *g += dv;
            }
        }

        Ok(Backward { loss, grads })
    }
}
