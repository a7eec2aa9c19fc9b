//! Versioned binary tensor container.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, a JSON header
//! holding free-form metadata plus the `(name, dtype, shape)` manifest, then
//! every tensor's little-endian payload in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{DType, Scalar};

use super::params::ParamStore;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SSQCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} missing from checkpoint")]
    Missing(String),
    #[error("tensor {0} in checkpoint is not part of the model")]
    Unexpected(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Decoded container: metadata plus raw tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub entries: Vec<TensorEntry>,
    payloads: Vec<Vec<u8>>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    mut out: W,
    store: &ParamStore<T>,
    metadata: serde_json::Value,
) -> Result<(), CheckpointError> {
    let header = Header {
        metadata,
        tensors: store
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                dtype: T::DTYPE,
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Format(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::new();
    for (_, t) in store.iter() {
        buf.clear();
        t.data().iter().for_each(|&v| v.write_le(&mut buf));
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let mut payloads = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; n * entry.dtype.size()];
        input.read_exact(&mut bytes)?;
        payloads.push(bytes);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(CheckpointError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(Checkpoint {
        metadata: header.metadata,
        entries: header.tensors,
        payloads,
    })
}

fn decode<T: Scalar>(entry: &TensorEntry, bytes: &[u8]) -> Tensor<T> {
    let size = entry.dtype.size();
    let data = bytes
        .chunks_exact(size)
        .map(|c| match entry.dtype {
            DType::F32 => T::lit(f32::read_le(c) as f64),
            DType::F64 => T::lit(f64::read_le(c)),
        })
        .collect();
    Tensor::new(entry.shape.clone(), data).expect("payload length matches shape")
}

impl Checkpoint {
    /// Overwrite `store` with the checkpoint's tensors, validating that
    /// names and shapes match exactly.
    pub fn restore<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        for entry in &self.entries {
            if store.id(&entry.name).is_err() {
                return Err(CheckpointError::Unexpected(entry.name.clone()));
            }
        }
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let pos = self
                .entries
                .iter()
                .position(|e| e.name == name)
                .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
            let entry = &self.entries[pos];
            let expected = store.get(id).shape().to_vec();
            if entry.shape != expected {
                return Err(CheckpointError::Shape {
                    name,
                    expected,
                    found: entry.shape.clone(),
                });
            }
            *store.get_mut(id) = decode(entry, &self.payloads[pos]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("a", Tensor::from_f64(&[2, 2], &[1.0, -2.5, 3.25, 1e-7]).unwrap());
        s.add("b", Tensor::from_f64(&[1, 3], &[0.1, 0.2, 0.3]).unwrap());
        s
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let src = store();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &src, serde_json::json!({"k": 1})).unwrap();
        let ck = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(ck.metadata["k"], 1);
        let mut dst = store();
        dst.get_mut(dst.id("a").unwrap()).fill(0.0);
        ck.restore(&mut dst).unwrap();
        for ((_, x), (_, y)) in src.iter().zip(dst.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store(), serde_json::Value::Null).unwrap();
        let ck = read_checkpoint(buf.as_slice()).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.add("a", Tensor::zeros(&[2, 3]));
        other.add("b", Tensor::zeros(&[1, 3]));
        assert!(matches!(ck.restore(&mut other), Err(CheckpointError::Shape { .. })));
        let mut missing = ParamStore::<f32>::new();
        missing.add("a", Tensor::zeros(&[2, 2]));
        assert!(matches!(ck.restore(&mut missing), Err(CheckpointError::Unexpected(_))));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]),
            Err(CheckpointError::Format(_))
        ));
    }
}
