//! Pipeline configuration file (TOML, one section per stage).
//!
//! Every key has a default, so a file only needs the values it changes.
//! Command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SplitSpec;
use crate::gpt::GptConfig;
use crate::instruct::{PackOptions, TranslateOptions};
use crate::train::{AdamWConfig, LrSchedule, TrainConfig, DEFAULT_LR_MAX, DEFAULT_WARMUP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dump: PathBuf,
    pub corpus: PathBuf,
    pub tokenizer: PathBuf,
    pub shards: PathBuf,
    pub checkpoints: PathBuf,
    pub logs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dump: "trwiki-latest-pages-articles.xml.bz2".into(),
            corpus: "work/corpus.jsonl".into(),
            tokenizer: "work/tokenizer.bpe".into(),
            shards: "work/shards".into(),
            checkpoints: "work/run".into(),
            logs: "work/run".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_chars: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { min_chars: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    pub reserve_separator: bool,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection {
            vocab_size: 32_768,
            reserve_separator: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        SplitSection {
            val_fraction: s.val_fraction,
            seed: s.seed,
        }
    }
}

/// Model shape. `vocab_size` 0 means "take it from the token shards".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub context_len: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = TrainConfig::desk(0).model;
        ModelSection {
            n_layer: m.n_layer,
            n_head: m.n_head,
            d_model: m.d_model,
            vocab_size: 0,
            context_len: m.context_len,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub lr_max: f64,
    /// Defaults to `lr_max / 10` when absent.
    pub lr_min: Option<f64>,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            lr_max: DEFAULT_LR_MAX,
            lr_min: None,
            warmup_steps: DEFAULT_WARMUP,
            total_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub batch_size: usize,
    pub grad_clip: f64,
    pub log_interval: usize,
    pub eval_interval: usize,
    pub eval_iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub record_wall_clock: bool,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::desk(0);
        TrainerSection {
            batch_size: t.batch_size,
            grad_clip: t.grad_clip,
            log_interval: t.log_interval,
            eval_interval: t.eval_interval,
            eval_iters: t.eval_iters,
            beta1: t.adamw.beta1,
            beta2: t.adamw.beta2,
            eps: t.adamw.eps,
            weight_decay: t.adamw.weight_decay,
            record_wall_clock: t.record_wall_clock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub data: u64,
    pub eval: u64,
    pub shuffle: u64,
}

impl Seeds {
    /// Every stream derived from one base value.
    pub fn from_base(base: u64) -> Self {
        Seeds {
            init: base,
            data: base.wrapping_add(1),
            eval: base.wrapping_add(2),
            shuffle: base.wrapping_add(3),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(1337)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstructSection {
    pub source_lang: String,
    pub target_lang: String,
    pub adapter: String,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub concurrency: usize,
    pub context_len: usize,
    pub epochs: usize,
    pub mask_prompt: bool,
}

impl Default for InstructSection {
    fn default() -> Self {
        let t = TranslateOptions::default();
        let p = PackOptions::new(512);
        InstructSection {
            source_lang: "en".into(),
            target_lang: "tr".into(),
            adapter: "identity".into(),
            max_attempts: t.max_attempts,
            backoff_ms: t.backoff_ms,
            concurrency: t.concurrency,
            context_len: p.context_len,
            epochs: p.epochs,
            mask_prompt: p.mask_prompt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub ingest: IngestSection,
    pub tokenizer: TokenizerSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub trainer: TrainerSection,
    pub seeds: Seeds,
    pub instruct: InstructSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Overrides every seed with values derived from `base`.
    pub fn reseed(&mut self, base: u64) {
        self.seeds = Seeds::from_base(base);
        self.split.seed = base;
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            val_fraction: self.split.val_fraction,
            seed: self.split.seed,
        }
    }

    /// Training settings; a model `vocab_size` of 0 becomes `shard_vocab`.
    pub fn train_config(&self, shard_vocab: usize) -> TrainConfig {
        let m = &self.model;
        let s = &self.schedule;
        let t = &self.trainer;
        TrainConfig {
            model: GptConfig {
                n_layer: m.n_layer,
                n_head: m.n_head,
                d_model: m.d_model,
                vocab_size: if m.vocab_size == 0 { shard_vocab } else { m.vocab_size },
                context_len: m.context_len,
                dropout: m.dropout,
            },
            schedule: LrSchedule {
                lr_max: s.lr_max,
                lr_min: s.lr_min.unwrap_or(s.lr_max / 10.0),
                warmup_steps: s.warmup_steps,
                total_steps: s.total_steps,
            },
            adamw: AdamWConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                weight_decay: t.weight_decay,
            },
            batch_size: t.batch_size,
            grad_clip: t.grad_clip,
            log_interval: t.log_interval,
            eval_interval: t.eval_interval,
            eval_iters: t.eval_iters,
            init_seed: self.seeds.init,
            data_seed: self.seeds.data,
            eval_seed: self.seeds.eval,
            record_wall_clock: t.record_wall_clock,
        }
    }

    pub fn translate_options(&self) -> TranslateOptions {
        TranslateOptions {
            max_attempts: self.instruct.max_attempts,
            backoff_ms: self.instruct.backoff_ms,
            concurrency: self.instruct.concurrency,
        }
    }

    pub fn pack_options(&self) -> PackOptions {
        PackOptions {
            context_len: self.instruct.context_len,
            epochs: self.instruct.epochs,
            seed: self.seeds.shuffle,
            mask_prompt: self.instruct.mask_prompt,
        }
    }
}
