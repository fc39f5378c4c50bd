//! Single-file parameter checkpoints.
//!
//! ```text
//! magic         8 bytes   "EQRCKPT1"
//! header_len    u64 LE
//! header        header_len bytes of UTF-8 JSON: {"kind", "meta", "tensors": [{"name", "shape"}]}
//! value_count   u64 LE
//! values        value_count x f64 LE, tensors concatenated in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EQRCKPT1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    tensors: Vec<TensorSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Router-type tag, e.g. `equirouter` or `cost`.
    pub kind: String,
    /// Shapes, seeds and hyperparameters.
    pub meta: Value,
    pub tensors: Vec<TensorSpec>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: Value, tensors: Vec<TensorSpec>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = tensors.iter().map(TensorSpec::len).sum();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "checkpoint declares {expected} values but holds {}",
                values.len()
            )));
        }
        Ok(Self {
            kind: kind.into(),
            meta,
            tensors,
            values,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serialize");
        let mut out = Vec::with_capacity(24 + header.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Invalid(format!("malformed checkpoint: {msg}"));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| bad("truncated"))?;
            let slice = &bytes[pos..end];
            pos = end;
            Ok(slice)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let header_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(header_len)?).map_err(|e| bad(&format!("header: {e}")))?;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(count.checked_mul(8).ok_or_else(|| bad("value count overflow"))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Self::new(header.kind, header.meta, header.tensors, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
