use serde::{Deserialize, Serialize};

use super::DataError;
use crate::corpus::ArticleRecord;

/// Held-out fraction and the seed of the assignment hash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_fraction: 0.001,
            seed: 1337,
        }
    }
}

impl SplitSpec {
    pub fn new(val_fraction: f64, seed: u64) -> Result<Self, DataError> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(DataError::Config(format!(
                "validation fraction {val_fraction} must lie in [0, 1)"
            )));
        }
        Ok(SplitSpec { val_fraction, seed })
    }

    /// Whether the record with this id belongs to the validation split.
    /// Depends only on `(seed, id)`, so it is stable across runs, machines
    /// and corpus growth.
    pub fn is_validation(&self, id: u64) -> bool {
        let h = splitmix64(self.seed ^ splitmix64(id));
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        unit < self.val_fraction
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Partitions records by document into `(train, val)`, preserving order.
pub fn split_corpus<I>(records: I, spec: &SplitSpec) -> (Vec<ArticleRecord>, Vec<ArticleRecord>)
where
    I: IntoIterator<Item = ArticleRecord>,
{
    records.into_iter().partition(|r| !spec.is_validation(r.id))
}
