//! Train/validation split, binary token shards and batch sampling.

mod batch;
mod shard;
mod split;

pub use batch::{batch_at, sample_batch, Batch, BatchSampler, SamplerState};
pub use shard::{pack_shard, token_width, ShardSummary, TokenShard, HEADER_LEN, SHARD_MAGIC};
pub use split::{split_corpus, SplitSpec};

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::bpe::TokenizerModel;
use crate::corpus::{self, IngestError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data configuration: {0}")]
    Config(String),
    #[error("malformed shard: {0}")]
    Format(String),
    #[error("token {token} out of range for vocabulary {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: u32 },
    #[error("shard holds {count} tokens but {needed} are needed")]
    ShardTooSmall { count: usize, needed: usize },
    #[error("tokenizer has no reserved document separator; train it with one")]
    NoSeparator,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PackReport {
    pub train: ShardSummary,
    pub val: ShardSummary,
}

pub const TRAIN_SHARD: &str = "train.bin";
pub const VAL_SHARD: &str = "val.bin";

/// Splits the record file at `corpus_path` and writes `train.bin` and
/// `val.bin` into `out_dir`.
pub fn pack_corpus(
    corpus_path: &Path,
    model: &TokenizerModel,
    split: &SplitSpec,
    out_dir: &Path,
) -> Result<PackReport, DataError> {
    fs::create_dir_all(out_dir).map_err(|source| DataError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let records = corpus::load_records(corpus_path)?;
    let (train, val) = split_corpus(records, split);
    let train = pack_shard(train.iter().map(|r| r.body.as_str()), model, &out_dir.join(TRAIN_SHARD))?;
    let val = pack_shard(val.iter().map(|r| r.body.as_str()), model, &out_dir.join(VAL_SHARD))?;
    Ok(PackReport { train, val })
}
