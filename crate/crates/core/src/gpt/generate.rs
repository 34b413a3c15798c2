use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::softmax_in_place;
use super::{GptParams, ModelError, Scalar};

/// Decoding settings. A temperature of 0 (or `top_k == Some(1)`) is greedy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl Sampling {
    pub fn greedy() -> Self {
        Sampling {
            temperature: 0.0,
            top_k: None,
            seed: 0,
        }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0 || self.top_k == Some(1)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ModelError::Input(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.top_k == Some(0) {
            return Err(ModelError::Input("top_k must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Highest logit, lowest id on ties.
fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn sample_row<T: Scalar>(row: &[T], sampling: &Sampling, rng: &mut ChaCha8Rng) -> usize {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    if let Some(k) = sampling.top_k {
        order.truncate(k.min(row.len()));
    }
    let inv_temp = T::lit(1.0 / sampling.temperature);
    let mut probs: Vec<T> = order.iter().map(|&i| row[i] * inv_temp).collect();
    softmax_in_place(&mut probs);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (&id, &p) in order.iter().zip(&probs) {
        acc += p.to_f64_lossy();
        if u < acc {
            return id;
        }
    }
    *order.last().expect("non-empty vocabulary")
}

impl<T: Scalar> GptParams<T> {
    /// Appends up to `max_new` tokens to `prompt` and returns only the new
    /// ones. Once the context is full the oldest tokens slide out.
    pub fn generate(&self, prompt: &[u32], max_new: usize, sampling: &Sampling) -> Result<Vec<u32>, ModelError> {
        if prompt.is_empty() {
            return Err(ModelError::Input("prompt must not be empty".to_string()));
        }
        sampling.validate()?;
        let ctx = self.config.context_len;
        let vocab = self.config.vocab_size;
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        let mut seq = prompt.to_vec();
        for _ in 0..max_new {
            let window = &seq[seq.len().saturating_sub(ctx)..];
            let logits = self.logits(window, 1, window.len())?;
            let last = &logits[(window.len() - 1) * vocab..];
            let next = if sampling.is_greedy() {
                argmax(last)
            } else {
                sample_row(last, sampling, &mut rng)
            };
            seq.push(next as u32);
        }
        Ok(seq.split_off(prompt.len()))
    }
}
