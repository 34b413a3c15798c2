use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, TokenShard};

/// `batch_size` rows of `context_len` tokens, row-major. `targets` is
/// `inputs` shifted left by one within the source stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_size: usize,
    pub context_len: usize,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
}

impl Batch {
    pub fn from_rows(inputs: Vec<Vec<u32>>, targets: Vec<Vec<u32>>) -> Self {
        let batch_size = inputs.len();
        let context_len = inputs.first().map_or(0, Vec::len);
        Batch {
            batch_size,
            context_len,
            inputs: inputs.concat(),
            targets: targets.concat(),
        }
    }

    pub fn input_row(&self, b: usize) -> &[u32] {
        &self.inputs[b * self.context_len..(b + 1) * self.context_len]
    }

    pub fn target_row(&self, b: usize) -> &[u32] {
        &self.targets[b * self.context_len..(b + 1) * self.context_len]
    }
}

fn check_size(shard: &TokenShard, context_len: usize) -> Result<(), DataError> {
    if context_len == 0 || shard.len() < context_len + 1 {
        return Err(DataError::ShardTooSmall {
            count: shard.len(),
            needed: context_len + 1,
        });
    }
    Ok(())
}

/// Builds a batch from explicit start offsets.
pub fn batch_at(shard: &TokenShard, offsets: &[usize], context_len: usize) -> Result<Batch, DataError> {
    check_size(shard, context_len)?;
    let max = shard.len() - context_len - 1;
    let mut inputs = Vec::with_capacity(offsets.len() * context_len);
    let mut targets = Vec::with_capacity(offsets.len() * context_len);
    for &o in offsets {
        if o > max {
            return Err(DataError::Config(format!("offset {o} exceeds the last valid start {max}")));
        }
        inputs.extend_from_slice(&shard.tokens[o..o + context_len]);
        targets.extend_from_slice(&shard.tokens[o + 1..o + context_len + 1]);
    }
    Ok(Batch {
        batch_size: offsets.len(),
        context_len,
        inputs,
        targets,
    })
}

/// Draws `batch_size` offsets uniformly from `[0, count - context_len - 1]`.
pub fn sample_batch<R: Rng + ?Sized>(
    shard: &TokenShard,
    batch_size: usize,
    context_len: usize,
    rng: &mut R,
) -> Result<Batch, DataError> {
    check_size(shard, context_len)?;
    let max = shard.len() - context_len - 1;
    let offsets: Vec<usize> = (0..batch_size).map(|_| rng.gen_range(0..=max)).collect();
    batch_at(shard, &offsets, context_len)
}

/// Serializable position of a [`BatchSampler`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Seeded batch source whose position can be saved and restored exactly.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    seed: u64,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(seed: u64) -> Self {
        BatchSampler {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_state(state: SamplerState) -> Self {
        let mut sampler = Self::new(state.seed);
        sampler.rng.set_word_pos(state.word_pos);
        sampler
    }

    pub fn state(&self) -> SamplerState {
        SamplerState {
            seed: self.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn sample(&mut self, shard: &TokenShard, batch_size: usize, context_len: usize) -> Result<Batch, DataError> {
        sample_batch(shard, batch_size, context_len, &mut self.rng)
    }
}
