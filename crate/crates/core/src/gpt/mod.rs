//! Decoder-only transformer with hand-written forward and backward passes.
//!
//! Blocks are pre-norm (`x += attn(ln(x)); x += mlp(ln(x))`) with learned
//! position embeddings, a tanh-approximated GELU MLP of width `4 * d_model`
//! and an output head tied to the token embedding. Everything is generic
//! over [`Scalar`], so the same code trains in `f32` and is checked against
//! finite differences in `f64`.

mod checkpoint;
mod generate;
pub mod gradcheck;
mod kernels;
mod model;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use generate::Sampling;
pub use model::{Backward, ForwardResult};
pub use params::{param_count, GptParams, LayerParams, Tensor};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::path::PathBuf;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floating-point element type of parameters and activations.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Send + Sync + Debug + Default + 'static
{
    fn lit(x: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn lit(x: f64) -> Self {
        x
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence length {seq} exceeds context length {context_len}")]
    SequenceTooLong { seq: usize, context_len: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GptConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub context_len: usize,
    /// Kept for config compatibility; only 0 is supported.
    #[serde(default)]
    pub dropout: f64,
}

impl GptConfig {
    /// The 124M-parameter GPT-2 small shape.
    pub fn gpt2_small() -> Self {
        GptConfig {
            n_layer: 12,
            n_head: 12,
            d_model: 768,
            vocab_size: 50_257,
            context_len: 1024,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.n_head == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_head) {
            return fail(format!(
                "d_model {} must be a positive multiple of n_head {}",
                self.d_model, self.n_head
            ));
        }
        if self.context_len == 0 {
            return fail("context_len must be at least 1".to_string());
        }
        if self.vocab_size < 2 {
            return fail(format!("vocab_size {} must be at least 2", self.vocab_size));
        }
        if self.dropout != 0.0 {
            return fail(format!("dropout {} is not supported; use 0", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_head
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }
}
