use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, render_prompt_parts, InstructError, InstructionRecord, Reject};
use crate::bpe::TokenizerModel;
use crate::data::Batch;

pub const FINETUNE_MAGIC: &[u8; 8] = b"TOKFTEX1";

/// Token ids of a rendered record and the positions that carry loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneExample {
    pub token_ids: Vec<u32>,
    pub loss_mask: Vec<u8>,
}

impl FinetuneExample {
    /// Next-token batch of one row: inputs `ids[..n-1]`, targets `ids[1..]`,
    /// with the mask entry of each target.
    pub fn to_batch(&self) -> Option<(Batch, Vec<u8>)> {
        let n = self.token_ids.len();
        if n < 2 {
            return None;
        }
        let batch = Batch {
            batch_size: 1,
            context_len: n - 1,
            inputs: self.token_ids[..n - 1].to_vec(),
            targets: self.token_ids[1..].to_vec(),
        };
        Some((batch, self.loss_mask[1..].to_vec()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackOptions {
    /// Maximum tokens per example.
    pub context_len: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Zero the mask over prompt tokens. When false every token counts.
    pub mask_prompt: bool,
}

impl PackOptions {
    pub fn new(context_len: usize) -> Self {
        PackOptions {
            context_len,
            epochs: 3,
            seed: 1337,
            mask_prompt: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FinetunePack {
    /// `epochs` shuffled copies of the accepted examples.
    pub examples: Vec<FinetuneExample>,
    pub accepted: usize,
    pub rejects: Vec<Reject>,
}

/// Renders, tokenizes and masks every record. The response is followed by
/// the tokenizer's separator id as end-of-text, and truncation only ever
/// removes tokens from the end of the response.
pub fn pack_finetune(
    records: &[InstructionRecord],
    model: &TokenizerModel,
    opts: &PackOptions,
) -> Result<FinetunePack, InstructError> {
    let eot = model
        .separator()
        .ok_or_else(|| InstructError::Config("tokenizer has no end-of-text id; train it with a separator".into()))?;
    if opts.epochs == 0 || opts.context_len < 2 {
        return Err(InstructError::Config("need epochs >= 1 and context_len >= 2".into()));
    }
    let mut base = Vec::with_capacity(records.len());
    let mut rejects = Vec::new();
    for (index, record) in records.iter().enumerate() {
        if let Err(reason) = record.check() {
            rejects.push(Reject {
                index,
                reason: reason.to_string(),
            });
            continue;
        }
        let (prompt, response) = render_prompt_parts(record);
        let prompt_ids = model.encode(&prompt);
        if prompt_ids.len() >= opts.context_len {
            rejects.push(Reject {
                index,
                reason: format!(
                    "prompt needs {} tokens, leaving no room in a context of {}",
                    prompt_ids.len(),
                    opts.context_len
                ),
            });
            continue;
        }
        let mut response_ids = model.encode(&response);
        response_ids.push(eot);
        response_ids.truncate(opts.context_len - prompt_ids.len());
        let prompt_flag = u8::from(!opts.mask_prompt);
        let mut loss_mask = vec![prompt_flag; prompt_ids.len()];
        loss_mask.resize(prompt_ids.len() + response_ids.len(), 1);
        let mut token_ids = prompt_ids;
        token_ids.extend(response_ids);
        base.push(FinetuneExample { token_ids, loss_mask });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..base.len()).collect();
    let mut examples = Vec::with_capacity(base.len() * opts.epochs);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        examples.extend(order.iter().map(|&i| base[i].clone()));
    }
    Ok(FinetunePack {
        accepted: base.len(),
        examples,
        rejects,
    })
}

/// Binary file of fine-tuning examples.
///
/// ```text
/// magic "TOKFTEX1" | u32 vocab_size | u32 reserved (0) | u64 count
/// per example: u32 len | len × u32 token ids | len × u8 mask
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneShard {
    pub vocab_size: u32,
    pub examples: Vec<FinetuneExample>,
}

fn format_err(path: &Path, message: impl Into<String>) -> InstructError {
    InstructError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl FinetuneShard {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FINETUNE_MAGIC);
        out.extend_from_slice(&self.vocab_size.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(self.examples.len() as u64).to_le_bytes());
        for ex in &self.examples {
            out.extend_from_slice(&(ex.token_ids.len() as u32).to_le_bytes());
            for id in &ex.token_ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
            out.extend_from_slice(&ex.loss_mask);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, InstructError> {
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8], InstructError> {
            if r.len() < n {
                return Err(format_err(path, "truncated fine-tuning shard"));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(8)? != FINETUNE_MAGIC {
            return Err(format_err(path, "bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let vocab_size = u32_at(take(4)?);
        take(4)?;
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let mut examples = Vec::new();
        for _ in 0..count {
            let len = u32_at(take(4)?) as usize;
            let token_ids: Vec<u32> = take(len * 4)?.chunks_exact(4).map(u32_at).collect();
            if let Some(&bad) = token_ids.iter().find(|&&t| t >= vocab_size) {
                return Err(format_err(path, format!("token {bad} out of range for vocabulary {vocab_size}")));
            }
            let loss_mask = take(len)?.to_vec();
            if loss_mask.iter().any(|&m| m > 1) {
                return Err(format_err(path, "mask values must be 0 or 1"));
            }
            examples.push(FinetuneExample { token_ids, loss_mask });
        }
        if !r.is_empty() {
            return Err(format_err(path, "trailing bytes"));
        }
        Ok(FinetuneShard { vocab_size, examples })
    }

    pub fn write(&self, path: &Path) -> Result<(), InstructError> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        w.write_all(&self.to_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, InstructError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io_err(path))?)
            .read_to_end(&mut bytes)
            .map_err(io_err(path))?;
        Self::from_bytes(&bytes, path)
    }
}
