//! Binary token shard.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "TOKSHRD1"
//!      8     4  token_width (2 or 4)
//!     12     4  vocab_size
//!     16     8  count (number of tokens)
//!     24     4  document separator id (0xFFFF_FFFF when absent)
//!     28     4  reserved, zero
//!     32     …  count tokens, token_width bytes each
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::DataError;
use crate::bpe::TokenizerModel;
use crate::corpus::partial_path;

pub const SHARD_MAGIC: &[u8; 8] = b"TOKSHRD1";
pub const HEADER_LEN: usize = 32;
const NO_SEPARATOR: u32 = u32::MAX;
const ENCODE_CHUNK: usize = 512;

/// Token width in bytes for a vocabulary: 2 when every id fits in 16 bits.
pub fn token_width(vocab_size: u32) -> usize {
    if vocab_size <= 65_536 {
        2
    } else {
        4
    }
}

/// An in-memory token stream with its header fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenShard {
    pub vocab_size: u32,
    pub separator: Option<u32>,
    pub tokens: Vec<u32>,
}

/// What was written by a packing call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShardSummary {
    pub documents: u64,
    pub count: u64,
    pub vocab_size: u32,
    pub token_width: usize,
    pub file_bytes: u64,
}

fn encode_header(vocab_size: u32, separator: Option<u32>, count: u64) -> [u8; HEADER_LEN] {
    let mut header = [0u8; HEADER_LEN];
    header[0..8].copy_from_slice(SHARD_MAGIC);
    header[8..12].copy_from_slice(&(token_width(vocab_size) as u32).to_le_bytes());
    header[12..16].copy_from_slice(&vocab_size.to_le_bytes());
    header[16..24].copy_from_slice(&count.to_le_bytes());
    header[24..28].copy_from_slice(&separator.unwrap_or(NO_SEPARATOR).to_le_bytes());
    header
}

fn push_token(buf: &mut Vec<u8>, token: u32, width: usize) {
    match width {
        2 => buf.extend_from_slice(&(token as u16).to_le_bytes()),
        _ => buf.extend_from_slice(&token.to_le_bytes()),
    }
}

impl TokenShard {
    pub fn new(vocab_size: u32, separator: Option<u32>, tokens: Vec<u32>) -> Result<Self, DataError> {
        let shard = TokenShard {
            vocab_size,
            separator,
            tokens,
        };
        shard.validate()?;
        Ok(shard)
    }

    fn validate(&self) -> Result<(), DataError> {
        if let Some(sep) = self.separator {
            if sep >= self.vocab_size {
                return Err(DataError::Format(format!(
                    "separator {sep} outside vocabulary {}",
                    self.vocab_size
                )));
            }
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(DataError::TokenOutOfRange {
                token: bad,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_width(&self) -> usize {
        token_width(self.vocab_size)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let width = self.token_width();
        let mut buf = Vec::with_capacity(HEADER_LEN + self.tokens.len() * width);
        buf.extend_from_slice(&encode_header(self.vocab_size, self.separator, self.tokens.len() as u64));
        for &t in &self.tokens {
            push_token(&mut buf, t, width);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < HEADER_LEN {
            return Err(DataError::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[0..8] != SHARD_MAGIC {
            return Err(DataError::Format("bad magic, not a TOKSHRD1 shard".to_string()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let width = u32_at(8) as usize;
        let vocab_size = u32_at(12);
        let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
        let separator = match u32_at(24) {
            NO_SEPARATOR => None,
            id => Some(id),
        };
        if width != token_width(vocab_size) {
            return Err(DataError::Format(format!(
                "token width {width} does not match vocabulary {vocab_size}"
            )));
        }
        let expected = HEADER_LEN as u64 + count * width as u64;
        if bytes.len() as u64 != expected {
            return Err(DataError::Format(format!(
                "file is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..];
        let tokens: Vec<u32> = match width {
            2 => payload
                .chunks_exact(2)
                .map(|c| u32::from(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
            _ => payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        TokenShard::new(vocab_size, separator, tokens)
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        write_atomically(path, |file| file.write_all(&self.to_bytes()))
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| DataError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Self::from_bytes(&bytes)
    }

    /// Splits the stream at separator tokens.
    pub fn documents(&self) -> Vec<&[u32]> {
        match self.separator {
            Some(sep) => self.tokens.split(|&t| t == sep).collect(),
            None => vec![&self.tokens[..]],
        }
    }
}

fn write_atomically(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), DataError> {
    let partial = partial_path(path);
    let result = (|| {
        let mut writer = BufWriter::new(File::create(&partial)?);
        body(&mut writer)?;
        let file = writer.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&partial, path)
    })();
    result.map_err(|source| {
        let _ = fs::remove_file(&partial);
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

/// Encodes `bodies` and writes them as one shard, with the tokenizer's
/// separator between consecutive documents. The payload is streamed; the
/// token count is patched into the header at the end.
pub fn pack_shard<I, S>(bodies: I, model: &TokenizerModel, path: &Path) -> Result<ShardSummary, DataError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str> + Send + Sync,
{
    let separator = model.separator().ok_or(DataError::NoSeparator)?;
    let vocab_size = model.vocab_size() as u32;
    let width = token_width(vocab_size);
    let mut documents = 0u64;
    let mut count = 0u64;

    write_atomically(path, |writer| {
        writer.write_all(&encode_header(vocab_size, Some(separator), 0))?;
        let mut chunk: Vec<S> = Vec::with_capacity(ENCODE_CHUNK);
        let mut buf = Vec::new();
        let mut flush = |chunk: &mut Vec<S>, writer: &mut BufWriter<File>| -> std::io::Result<()> {
            let encoded: Vec<Vec<u32>> = chunk.par_iter().map(|b| model.encode(b.as_ref())).collect();
            buf.clear();
            for ids in encoded {
                if documents > 0 {
                    push_token(&mut buf, separator, width);
                    count += 1;
                }
                for &t in &ids {
                    push_token(&mut buf, t, width);
                }
                count += ids.len() as u64;
                documents += 1;
            }
            chunk.clear();
            writer.write_all(&buf)
        };
        for body in bodies {
            chunk.push(body);
            if chunk.len() == ENCODE_CHUNK {
                flush(&mut chunk, writer)?;
            }
        }
        flush(&mut chunk, writer)?;
        writer.flush()?;
        let file = writer.get_mut();
        file.seek(SeekFrom::Start(0))?;
        file.write_all(&encode_header(vocab_size, Some(separator), count))?;
        file.seek(SeekFrom::End(0))?;
        Ok(())
    })?;

    Ok(ShardSummary {
        documents,
        count,
        vocab_size,
        token_width: width,
        file_bytes: HEADER_LEN as u64 + count * width as u64,
    })
}
