//! Named-tensor checkpoint container.
//!
//! Layout: an 8-byte little-endian header length `H`, then `H` bytes of UTF-8
//! JSON, then the concatenated tensor payloads as little-endian `f64`. The
//! header lists each tensor's name, shape and element offset into the payload:
//!
//! ```json
//! {"format":"recmia-tensors","version":1,"dtype":"f64le",
//!  "tensors":[{"name":"attack.layers.0.weight","shape":[64,32],"offset":0}]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NnError;

const FORMAT: &str = "recmia-tensors";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { name: name.into(), shape, data }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensors whose name starts with `prefix`, in stored order.
    pub fn with_prefix(&self, prefix: &str) -> Vec<Tensor> {
        self.tensors.iter().filter(|t| t.name.starts_with(prefix)).cloned().collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0usize;
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(NnError::Checkpoint(format!("tensor {} shape {:?} holds {} values", t.name, t.shape, t.data.len())));
            }
            entries.push(Entry { name: t.name.clone(), shape: t.shape.clone(), offset });
            offset += t.data.len();
        }
        let header = Header { format: FORMAT.into(), version: 1, dtype: "f64le".into(), tensors: entries };
        let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(8 + json.len() + offset * 8);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let err = |m: &str| NnError::Checkpoint(m.to_string());
        let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| err("truncated header length"))?.try_into().unwrap();
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let body_start = 8usize.checked_add(header_len).ok_or_else(|| err("header length overflow"))?;
        let json = bytes.get(8..body_start).ok_or_else(|| err("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if header.format != FORMAT || header.dtype != "f64le" {
            return Err(err("unrecognized container format"));
        }
        let payload = &bytes[body_start..];
        if payload.len() % 8 != 0 {
            return Err(err("payload is not a whole number of f64 values"));
        }
        let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + n)
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {} runs past the payload", e.name)))?
                .to_vec();
            tensors.push(Tensor { name: e.name, shape: e.shape, data });
        }
        Ok(Self { tensors })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
