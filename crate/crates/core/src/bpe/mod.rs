//! Byte-level byte-pair encoding.
//!
//! Ids `0..256` are raw bytes. Merge `r` produces id `256 + r` and may only
//! reference smaller ids. A model trained for packing additionally reserves
//! its highest id as the document separator.

mod encode;
mod io;
mod stats;
mod train;

pub use stats::{corpus_stats, TokenStats};
pub use train::{train_bpe, train_bpe_with, TrainOptions};

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

/// Number of base (single byte) tokens.
pub const BASE_SIZE: u32 = 256;
/// Text rendered for the document separator token.
pub const SEPARATOR_TEXT: &str = "<|endoftext|>";
/// Format tag written on the first line of a model file.
pub const FORMAT_TAG: &str = "bpe-v1";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("invalid tokenizer configuration: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("malformed model file, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A trained byte-level BPE vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerModel {
    merges: Vec<(u32, u32)>,
    ranks: HashMap<(u32, u32), u32>,
    decode_table: Vec<Vec<u8>>,
    separator: Option<u32>,
}

impl TokenizerModel {
    /// The base alphabet alone: 256 tokens, no merges.
    pub fn byte_level() -> Self {
        Self::from_merges(Vec::new(), false).expect("empty merge list is valid")
    }

    /// Builds a model from an ordered merge list, checking that every merge
    /// only references ids created before it.
    pub fn from_merges(merges: Vec<(u32, u32)>, with_separator: bool) -> Result<Self, TokenizerError> {
        let mut decode_table: Vec<Vec<u8>> = (0..BASE_SIZE).map(|b| vec![b as u8]).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(left, right)) in merges.iter().enumerate() {
            let id = BASE_SIZE + rank as u32;
            if left >= id || right >= id {
                return Err(TokenizerError::Config(format!(
                    "merge {rank} ({left}, {right}) references an id not smaller than its own id {id}"
                )));
            }
            if ranks.insert((left, right), rank as u32).is_some() {
                return Err(TokenizerError::Config(format!(
                    "merge {rank} ({left}, {right}) duplicates an earlier merge"
                )));
            }
            let mut bytes = decode_table[left as usize].clone();
            bytes.extend_from_slice(&decode_table[right as usize]);
            decode_table.push(bytes);
        }
        let separator = with_separator.then(|| {
            decode_table.push(SEPARATOR_TEXT.as_bytes().to_vec());
            (decode_table.len() - 1) as u32
        });
        Ok(TokenizerModel {
            merges,
            ranks,
            decode_table,
            separator,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.decode_table.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Id of the reserved document separator, if this model has one.
    pub fn separator(&self) -> Option<u32> {
        self.separator
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.decode_table.get(id as usize).map(Vec::as_slice)
    }

    pub(crate) fn rank(&self, pair: (u32, u32)) -> Option<u32> {
        self.ranks.get(&pair).copied()
    }

    /// A model with only the first `count` merges (and the same separator
    /// policy).
    pub fn truncated(&self, count: usize) -> Self {
        let merges = self.merges[..count.min(self.merges.len())].to_vec();
        Self::from_merges(merges, self.separator.is_some()).expect("prefix of a valid merge list")
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    /// Concatenated byte sequences of `ids`.
    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::with_capacity(ids.len() * 3);
        for &id in ids {
            let bytes = self.token_bytes(id).ok_or(TokenizerError::IdOutOfRange {
                id,
                vocab_size: self.vocab_size(),
            })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    /// Decodes to text; invalid UTF-8 becomes U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let bytes = self.decode_bytes(ids)?;
        Ok(match String::from_utf8(bytes) {
            Ok(text) => text,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}
