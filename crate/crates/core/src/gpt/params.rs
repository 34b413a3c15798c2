use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GptConfig, ModelError, Scalar};

const INIT_STD: f64 = 0.02;

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() >= 2
    }
}

/// Parameters of one transformer block. Weights are stored `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm_gain: Tensor<T>,
    pub attn_norm_bias: Tensor<T>,
    pub query: Tensor<T>,
    pub query_bias: Tensor<T>,
    pub key: Tensor<T>,
    pub key_bias: Tensor<T>,
    pub value: Tensor<T>,
    pub value_bias: Tensor<T>,
    pub attn_out: Tensor<T>,
    pub attn_out_bias: Tensor<T>,
    pub mlp_norm_gain: Tensor<T>,
    pub mlp_norm_bias: Tensor<T>,
    pub mlp_in: Tensor<T>,
    pub mlp_in_bias: Tensor<T>,
    pub mlp_out: Tensor<T>,
    pub mlp_out_bias: Tensor<T>,
}

const LAYER_FIELDS: usize = 16;

impl<T: Scalar> LayerParams<T> {
    fn zeros(c: usize) -> Self {
        let f = 4 * c;
        LayerParams {
            attn_norm_gain: Tensor::zeros(&[c]),
            attn_norm_bias: Tensor::zeros(&[c]),
            query: Tensor::zeros(&[c, c]),
            query_bias: Tensor::zeros(&[c]),
            key: Tensor::zeros(&[c, c]),
            key_bias: Tensor::zeros(&[c]),
            value: Tensor::zeros(&[c, c]),
            value_bias: Tensor::zeros(&[c]),
            attn_out: Tensor::zeros(&[c, c]),
            attn_out_bias: Tensor::zeros(&[c]),
            mlp_norm_gain: Tensor::zeros(&[c]),
            mlp_norm_bias: Tensor::zeros(&[c]),
            mlp_in: Tensor::zeros(&[c, f]),
            mlp_in_bias: Tensor::zeros(&[f]),
            mlp_out: Tensor::zeros(&[f, c]),
            mlp_out_bias: Tensor::zeros(&[c]),
        }
    }

    fn fields(&self) -> [(&'static str, &Tensor<T>); LAYER_FIELDS] {
        [
            ("attn_norm.gain", &self.attn_norm_gain),
            ("attn_norm.bias", &self.attn_norm_bias),
            ("attn.query.weight", &self.query),
            ("attn.query.bias", &self.query_bias),
            ("attn.key.weight", &self.key),
            ("attn.key.bias", &self.key_bias),
            ("attn.value.weight", &self.value),
            ("attn.value.bias", &self.value_bias),
            ("attn.out.weight", &self.attn_out),
            ("attn.out.bias", &self.attn_out_bias),
            ("mlp_norm.gain", &self.mlp_norm_gain),
            ("mlp_norm.bias", &self.mlp_norm_bias),
            ("mlp.in.weight", &self.mlp_in),
            ("mlp.in.bias", &self.mlp_in_bias),
            ("mlp.out.weight", &self.mlp_out),
            ("mlp.out.bias", &self.mlp_out_bias),
        ]
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut Tensor<T>); LAYER_FIELDS] {
        [
            ("attn_norm.gain", &mut self.attn_norm_gain),
            ("attn_norm.bias", &mut self.attn_norm_bias),
            ("attn.query.weight", &mut self.query),
            ("attn.query.bias", &mut self.query_bias),
            ("attn.key.weight", &mut self.key),
            ("attn.key.bias", &mut self.key_bias),
            ("attn.value.weight", &mut self.value),
            ("attn.value.bias", &mut self.value_bias),
            ("attn.out.weight", &mut self.attn_out),
            ("attn.out.bias", &mut self.attn_out_bias),
            ("mlp_norm.gain", &mut self.mlp_norm_gain),
            ("mlp_norm.bias", &mut self.mlp_norm_bias),
            ("mlp.in.weight", &mut self.mlp_in),
            ("mlp.in.bias", &mut self.mlp_in_bias),
            ("mlp.out.weight", &mut self.mlp_out),
            ("mlp.out.bias", &mut self.mlp_out_bias),
        ]
    }
}

/// Full parameter set. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct GptParams<T> {
    pub config: GptConfig,
    pub token_embedding: Tensor<T>,
    pub position_embedding: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_norm_gain: Tensor<T>,
    pub final_norm_bias: Tensor<T>,
}

/// Closed-form parameter count (output head tied to the token embedding).
pub fn param_count(config: &GptConfig) -> usize {
    let c = config.d_model;
    let embeddings = config.vocab_size * c + config.context_len * c;
    let attention = 4 * (c * c + c);
    let mlp = (c * 4 * c + 4 * c) + (4 * c * c + c);
    let norms = 2 * (c + c);
    embeddings + config.n_layer * (attention + mlp + norms) + (c + c)
}

impl<T: Scalar> GptParams<T> {
    /// All-zero parameters, layer-norm gains included.
    pub fn zeros(config: &GptConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let c = config.d_model;
        Ok(GptParams {
            config: *config,
            token_embedding: Tensor::zeros(&[config.vocab_size, c]),
            position_embedding: Tensor::zeros(&[config.context_len, c]),
            layers: (0..config.n_layer).map(|_| LayerParams::zeros(c)).collect(),
            final_norm_gain: Tensor::zeros(&[c]),
            final_norm_bias: Tensor::zeros(&[c]),
        })
    }

    /// Weights ~ N(0, 0.02), residual output projections scaled by
    /// `1/sqrt(2 * n_layer)`, biases zero, norm gains one.
    pub fn init(config: &GptConfig, seed: u64) -> Result<Self, ModelError> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let residual_std = INIT_STD / ((2 * config.n_layer.max(1)) as f64).sqrt();
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let residual = Normal::new(0.0, residual_std).expect("valid std");
        for (name, tensor) in params.tensors_mut() {
            if name.ends_with(".gain") {
                tensor.data.fill(T::one());
            } else if tensor.is_matrix() {
                let dist = if name.ends_with("attn.out.weight") || name.ends_with("mlp.out.weight") {
                    &residual
                } else {
                    &normal
                };
                for x in tensor.data.iter_mut() {
                    *x = T::lit(dist.sample(&mut rng));
                }
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Named tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::with_capacity(4 + self.layers.len() * LAYER_FIELDS);
        out.push(("token_embedding".to_string(), &self.token_embedding));
        out.push(("position_embedding".to_string(), &self.position_embedding));
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.fields() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("final_norm.gain".to_string(), &self.final_norm_gain));
        out.push(("final_norm.bias".to_string(), &self.final_norm_bias));
        out
    }

    /// Mutable counterpart of [`GptParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::with_capacity(4 + self.layers.len() * LAYER_FIELDS);
        out.push(("token_embedding".to_string(), &mut self.token_embedding));
        out.push(("position_embedding".to_string(), &mut self.position_embedding));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.fields_mut() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("final_norm.gain".to_string(), &mut self.final_norm_gain));
        out.push(("final_norm.bias".to_string(), &mut self.final_norm_bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> GptParams<U> {
        let mut out = GptParams::<U>::zeros(&self.config).expect("config already validated");
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Checks that `other` has exactly the tensor shapes of `self`.
    pub fn check_same_shape(&self, other: &GptParams<T>) -> Result<(), ModelError> {
        let mine = self.tensors();
        let theirs = other.tensors();
        if mine.len() != theirs.len() {
            return Err(ModelError::Shape {
                name: "layers".to_string(),
                expected: vec![mine.len()],
                found: vec![theirs.len()],
            });
        }
        for ((name, a), (_, b)) in mine.iter().zip(&theirs) {
            if a.shape != b.shape {
                return Err(ModelError::Shape {
                    name: name.clone(),
                    expected: a.shape.clone(),
                    found: b.shape.clone(),
                });
            }
        }
        Ok(())
    }
}
