//! Checkpoint container.
//!
//! ```text
//! magic        8 bytes  "GPTCKPT1"
//! header_len   u32
//! header       header_len bytes of UTF-8 `key=value` lines: the six
//!              GptConfig fields, then `meta.<key>=<value>` in key order
//! tensor_count u32
//! per tensor:  u32 name_len, name (UTF-8), u32 ndim, ndim × u64 dims,
//!              product(dims) × f32
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GptConfig, GptParams, ModelError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GPTCKPT1";

/// Upper bound on a single length field, to fail fast on corrupt input.
const MAX_FIELD: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: GptConfig,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ModelError> {
    r.read_exact(buf).map_err(|e| bad(format!("truncated file: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl Checkpoint {
    pub fn from_params(params: &GptParams<f32>) -> Self {
        Checkpoint {
            config: params.config,
            meta: BTreeMap::new(),
            tensors: params.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    /// Adds every tensor of `params` under `prefix`.
    pub fn push_prefixed(&mut self, prefix: &str, params: &GptParams<f32>) {
        for (name, t) in params.tensors() {
            self.tensors.push((format!("{prefix}{name}"), t.clone()));
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Model parameters stored without prefix.
    pub fn params(&self) -> Result<GptParams<f32>, ModelError> {
        self.params_prefixed("")
    }

    /// Rebuilds a parameter set from tensors named `prefix + canonical name`.
    pub fn params_prefixed(&self, prefix: &str) -> Result<GptParams<f32>, ModelError> {
        let index: BTreeMap<&str, &Tensor<f32>> = self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut params = GptParams::<f32>::zeros(&self.config)?;
        for (name, slot) in params.tensors_mut() {
            let full = format!("{prefix}{name}");
            let t = index.get(full.as_str()).ok_or_else(|| bad(format!("missing tensor {full}")))?;
            if t.shape != slot.shape {
                return Err(ModelError::Shape {
                    name: full,
                    expected: slot.shape.clone(),
                    found: t.shape.clone(),
                });
            }
            slot.data.clone_from(&t.data);
        }
        Ok(params)
    }

    fn header(&self) -> Result<String, ModelError> {
        let c = &self.config;
        let mut h = format!(
            "n_layer={}\nn_head={}\nd_model={}\nvocab_size={}\ncontext_len={}\ndropout={}\n",
            c.n_layer, c.n_head, c.d_model, c.vocab_size, c.context_len, c.dropout
        );
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(bad(format!("metadata entry {k:?} is not a single key=value line")));
            }
            h.push_str(&format!("meta.{k}={v}\n"));
        }
        Ok(h)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ModelError> {
        let header = self.header()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(header.as_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(bad(format!("tensor {name} has inconsistent shape")));
            }
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(|e| bad(format!("write failed: {e}")))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let header_len = read_u32(r)? as usize;
        let mut header = vec![0u8; header_len];
        read_exact(r, &mut header)?;
        let header = String::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
        let (config, meta) = parse_header(&header)?;

        let count = read_u32(r)?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
            let ndim = read_u32(r)?;
            let mut shape = Vec::with_capacity(ndim as usize);
            let mut len: u64 = 1;
            for _ in 0..ndim {
                let d = read_u64(r)?;
                len = len.saturating_mul(d);
                shape.push(d as usize);
            }
            if len > MAX_FIELD {
                return Err(bad(format!("tensor {name} is implausibly large")));
            }
            let mut raw = vec![0u8; len as usize * 4];
            read_exact(r, &mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push((name, Tensor { shape, data }));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| bad(format!("read failed: {e}")))? != 0 {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Checkpoint { config, meta, tensors })
    }

    /// Writes through a temporary sibling and renames into place.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let tmp = crate::corpus::partial_path(path);
        let result = (|| {
            let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
            self.write_to(&mut w)?;
            w.flush().map_err(io_err(&tmp))?;
            drop(w);
            std::fs::rename(&tmp, path).map_err(io_err(path))
        })();
        if result.is_err() {
            let _ = std::fs::remove_file(&tmp);
        }
        result
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
        Self::read_from(&mut r)
    }
}

fn parse_header(text: &str) -> Result<(GptConfig, BTreeMap<String, String>), ModelError> {
    let mut fields = BTreeMap::new();
    let mut meta = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("header line {line:?} is not key=value")))?;
        match k.strip_prefix("meta.") {
            Some(key) => meta.insert(key.to_string(), v.to_string()),
            None => fields.insert(k.to_string(), v.to_string()),
        };
    }
    let int = |key: &str| -> Result<usize, ModelError> {
        fields
            .get(key)
            .ok_or_else(|| bad(format!("header lacks {key}")))?
            .parse()
            .map_err(|_| bad(format!("header field {key} is not an integer")))
    };
    let dropout = fields
        .get("dropout")
        .map(|v| v.parse::<f64>())
        .transpose()
        .map_err(|_| bad("header field dropout is not a number"))?
        .unwrap_or(0.0);
    let config = GptConfig {
        n_layer: int("n_layer")?,
        n_head: int("n_head")?,
        d_model: int("d_model")?,
        vocab_size: int("vocab_size")?,
        context_len: int("context_len")?,
        dropout,
    };
    config.validate()?;
    Ok((config, meta))
}
