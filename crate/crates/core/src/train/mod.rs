//! Optimization loop: AdamW, warmup plus cosine learning rate, periodic
//! loss estimation, checkpoints and a CSV loss log.

mod log;
mod optim;
mod plot;
mod schedule;

pub use log::{append_rows, read_log, truncate_log, TrainLogRow};
pub use optim::{adamw_step, adamw_update, clip_global_norm, gradient_clip, AdamWConfig, OptimState};
pub use plot::render_loss_svg;
pub use schedule::{LrSchedule, DEFAULT_LR_MAX, DEFAULT_WARMUP};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BatchSampler, DataError, SamplerState, TokenShard, TRAIN_SHARD, VAL_SHARD};
use crate::gpt::{Checkpoint, GptConfig, GptParams, ModelError, Scalar};

pub const CHECKPOINT_FILE: &str = "ckpt.bin";
pub const LOG_FILE: &str = "log.csv";

/// Prefixes of the optimizer moments inside a checkpoint.
const M_PREFIX: &str = "adam.m.";
const V_PREFIX: &str = "adam.v.";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite loss or gradient at step {step}; state saved to {checkpoint}")]
    NonFinite { step: usize, checkpoint: PathBuf },
    #[error("loss log error: {0}")]
    Log(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: GptConfig,
    pub schedule: LrSchedule,
    pub adamw: AdamWConfig,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub log_interval: usize,
    pub eval_interval: usize,
    pub eval_iters: usize,
    pub init_seed: u64,
    pub data_seed: u64,
    pub eval_seed: u64,
    /// Fill `wall_ms` with elapsed time. Off by default so that logs are a
    /// pure function of the inputs.
    pub record_wall_clock: bool,
}

impl TrainConfig {
    /// Small defaults for a model over `vocab_size` tokens.
    pub fn desk(vocab_size: usize) -> Self {
        TrainConfig {
            model: GptConfig {
                n_layer: 4,
                n_head: 4,
                d_model: 128,
                vocab_size,
                context_len: 128,
                dropout: 0.0,
            },
            schedule: LrSchedule::default(),
            adamw: AdamWConfig::default(),
            batch_size: 8,
            grad_clip: 1.0,
            log_interval: 10,
            eval_interval: 100,
            eval_iters: 10,
            init_seed: 1337,
            data_seed: 1338,
            eval_seed: 1339,
            record_wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        self.schedule.validate()?;
        let positive = [
            ("batch_size", self.batch_size),
            ("log_interval", self.log_interval),
            ("eval_interval", self.eval_interval),
            ("eval_iters", self.eval_iters),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be at least 1")));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(TrainError::Config(format!("grad_clip {} must be positive", self.grad_clip)));
        }
        Ok(())
    }
}

/// Mean loss over `iters` batches drawn with a fresh generator seeded by
/// `seed`, so evaluation never touches the training stream.
pub fn estimate_loss<T: Scalar>(
    params: &GptParams<T>,
    shard: &TokenShard,
    batch_size: usize,
    iters: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let ctx = params.config.context_len;
    let mut sampler = BatchSampler::new(seed);
    let mut total = 0.0;
    for _ in 0..iters {
        let batch = sampler.sample(shard, batch_size, ctx)?;
        total += params.forward(&batch)?.loss.to_f64_lossy();
    }
    Ok(total / iters as f64)
}

/// Train and validation loss with the same evaluation seed. The validation
/// entry is `None` when that shard is too short for one context window.
pub fn estimate_losses<T: Scalar>(
    params: &GptParams<T>,
    train: &TokenShard,
    val: Option<&TokenShard>,
    batch_size: usize,
    iters: usize,
    seed: u64,
) -> Result<(f64, Option<f64>), TrainError> {
    let train_loss = estimate_loss(params, train, batch_size, iters, seed)?;
    let ctx = params.config.context_len;
    let val_loss = match val {
        Some(v) if v.len() > ctx => Some(estimate_loss(params, v, batch_size, iters, seed)?),
        _ => None,
    };
    Ok((train_loss, val_loss))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub start_step: usize,
    pub end_step: usize,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    pub last_row: Option<TrainLogRow>,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

/// Parameters, optimizer moments and sampler position of a run.
pub struct Trainer<'a> {
    config: TrainConfig,
    train: &'a TokenShard,
    val: Option<&'a TokenShard>,
    params: GptParams<f32>,
    optim: OptimState<f32>,
    sampler: BatchSampler,
    step: usize,
    resumed: bool,
}

fn meta_get<V: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<V, TrainError> {
    ck.meta
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| TrainError::Config(format!("checkpoint lacks a valid {key} entry")))
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, train: &'a TokenShard, val: Option<&'a TokenShard>) -> Result<Self, TrainError> {
        config.validate()?;
        for shard in std::iter::once(train).chain(val) {
            if shard.vocab_size as usize > config.model.vocab_size {
                return Err(TrainError::Config(format!(
                    "shard vocabulary {} exceeds model vocabulary {}",
                    shard.vocab_size, config.model.vocab_size
                )));
            }
        }
        if train.len() <= config.model.context_len {
            return Err(DataError::ShardTooSmall {
                count: train.len(),
                needed: config.model.context_len + 1,
            }
            .into());
        }
        let params = GptParams::init(&config.model, config.init_seed)?;
        Ok(Trainer {
            optim: OptimState::new(&params),
            params,
            sampler: BatchSampler::new(config.data_seed),
            config,
            train,
            val,
            step: 0,
            resumed: false,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(
        config: TrainConfig,
        train: &'a TokenShard,
        val: Option<&'a TokenShard>,
        checkpoint: &Checkpoint,
    ) -> Result<Self, TrainError> {
        let mut trainer = Self::new(config, train, val)?;
        if checkpoint.config != config.model {
            return Err(TrainError::Config("checkpoint model shape differs from the configuration".to_string()));
        }
        trainer.params = checkpoint.params()?;
        trainer.optim = OptimState {
            step: meta_get(checkpoint, "optim_step")?,
            m: checkpoint.params_prefixed(M_PREFIX)?,
            v: checkpoint.params_prefixed(V_PREFIX)?,
        };
        trainer.sampler = BatchSampler::from_state(SamplerState {
            seed: meta_get(checkpoint, "sampler_seed")?,
            word_pos: meta_get(checkpoint, "sampler_word_pos")?,
        });
        trainer.step = meta_get(checkpoint, "step")?;
        trainer.resumed = true;
        Ok(trainer)
    }

    pub fn params(&self) -> &GptParams<f32> {
        &self.params
    }

    /// Index of the next update.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_params(&self.params);
        ck.push_prefixed(M_PREFIX, &self.optim.m);
        ck.push_prefixed(V_PREFIX, &self.optim.v);
        let sampler = self.sampler.state();
        ck.meta.insert("step".into(), self.step.to_string());
        ck.meta.insert("optim_step".into(), self.optim.step.to_string());
        ck.meta.insert("sampler_seed".into(), sampler.seed.to_string());
        ck.meta.insert("sampler_word_pos".into(), sampler.word_pos.to_string());
        ck
    }

    pub fn estimate(&self) -> Result<(f64, Option<f64>), TrainError> {
        estimate_losses(
            &self.params,
            self.train,
            self.val,
            self.config.batch_size,
            self.config.eval_iters,
            self.config.eval_seed,
        )
    }

    /// One sample → backward → clip → AdamW update. Returns the batch loss
    /// before the update and the learning rate used.
    pub fn train_step(&mut self) -> Result<(f64, f64), TrainError> {
        let batch = self.sampler.sample(self.train, self.config.batch_size, self.config.model.context_len)?;
        let mut out = self.params.backward(&batch)?;
        if !out.loss.is_finite() || !out.grads.all_finite() {
            return Err(TrainError::NonFinite {
                step: self.step,
                checkpoint: PathBuf::new(),
            });
        }
        gradient_clip(&mut out.grads, self.config.grad_clip);
        let lr = self.config.schedule.lr_at(self.step);
        adamw_step(&mut self.params, &out.grads, &mut self.optim, lr, &self.config.adamw)?;
        self.step += 1;
        Ok((f64::from(out.loss), lr))
    }

    /// Trains until `until` updates have been applied, logging to
    /// `out_dir/log.csv` and checkpointing to `out_dir/ckpt.bin` every
    /// `eval_interval` steps and at the end.
    pub fn run(&mut self, until: usize, out_dir: &Path) -> Result<TrainSummary, TrainError> {
        std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let log_path = out_dir.join(LOG_FILE);
        let ckpt_path = out_dir.join(CHECKPOINT_FILE);
        let start_step = self.step;
        truncate_log(&log_path, if self.resumed { start_step } else { 0 })?;

        let started = Instant::now();
        let mut last_row = None;
        while self.step < until {
            let step = self.step;
            let val_loss = if step.is_multiple_of(self.config.eval_interval) {
                let (_, val) = self.estimate()?;
                val
            } else {
                None
            };
            let (loss, lr) = match self.train_step() {
                Err(TrainError::NonFinite { step, .. }) => {
                    let path = out_dir.join(format!("nonfinite-step{step}.bin"));
                    self.checkpoint().save(&path)?;
                    return Err(TrainError::NonFinite { step, checkpoint: path });
                }
                other => other?,
            };
            if step.is_multiple_of(self.config.log_interval) || val_loss.is_some() {
                let row = TrainLogRow {
                    step,
                    lr,
                    train_loss: loss,
                    val_loss,
                    wall_ms: if self.config.record_wall_clock {
                        started.elapsed().as_millis() as u64
                    } else {
                        0
                    },
                };
                append_rows(&log_path, &[row])?;
                last_row = Some(row);
            }
            if self.step.is_multiple_of(self.config.eval_interval) {
                self.checkpoint().save(&ckpt_path)?;
            }
        }
        self.checkpoint().save(&ckpt_path)?;
        let (final_train_loss, final_val_loss) = self.estimate()?;
        Ok(TrainSummary {
            start_step,
            end_step: self.step,
            final_train_loss,
            final_val_loss,
            last_row,
            checkpoint: ckpt_path,
            log: log_path,
        })
    }
}

/// Trains on `data_dir/train.bin` (and `val.bin` when present) up to
/// `steps` updates, optionally resuming from a checkpoint.
pub fn train(
    config: &TrainConfig,
    data_dir: &Path,
    out_dir: &Path,
    steps: usize,
    resume: Option<&Path>,
) -> Result<TrainSummary, TrainError> {
    let train_shard = TokenShard::read(&data_dir.join(TRAIN_SHARD))?;
    let val_path = data_dir.join(VAL_SHARD);
    let val_shard = if val_path.exists() {
        Some(TokenShard::read(&val_path)?)
    } else {
        None
    };
    let mut trainer = match resume {
        Some(path) => Trainer::resume(*config, &train_shard, val_shard.as_ref(), &Checkpoint::load(path)?)?,
        None => Trainer::new(*config, &train_shard, val_shard.as_ref())?,
    };
    trainer.run(steps, out_dir)
}
