//! Checkpoint files: one line of JSON header (metadata plus tensor names,
//! shapes and byte offsets) followed by the raw little-endian `f32` payloads
//! in header order.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// Named tensors plus free-form JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset });
            offset += t.numel() * 4;
        }
        let header = CheckpointHeader { config: self.config.clone(), tensors: entries };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        out.reserve(offset);
        for t in self.tensors.values() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(origin, "missing header terminator"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::format(origin, format!("header: {e}")))?;
        let payload = &bytes[newline + 1..];
        let mut tensors = IndexMap::with_capacity(header.tensors.len());
        let mut expected_offset = 0;
        for entry in header.tensors {
            let numel: usize = entry.shape.iter().product();
            if entry.offset != expected_offset {
                return Err(Error::format(origin, format!("tensor {} has offset {}, expected {expected_offset}", entry.name, entry.offset)));
            }
            let end = entry.offset + numel * 4;
            let raw = payload
                .get(entry.offset..end)
                .ok_or_else(|| Error::format(origin, format!("payload truncated in tensor {}", entry.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor::new(entry.shape, data).map_err(|e| Error::format(origin, e.to_string()))?;
            if tensors.insert(entry.name.clone(), t).is_some() {
                return Err(Error::format(origin, format!("duplicate tensor {}", entry.name)));
            }
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return Err(Error::format(origin, format!("{} trailing payload bytes", payload.len() - expected_offset)));
        }
        Ok(Checkpoint { config: header.config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut tensors = IndexMap::new();
        tensors.insert("b.weight".to_string(), Tensor::from_fn(vec![2, 3], |i| i as f64 * 0.5 - 1.0));
        tensors.insert("a.bias".to_string(), Tensor::scalar(0.25));
        Checkpoint { config: serde_json::json!({"beta": 1.0, "name": "x"}), tensors }
    }

    #[test]
    fn layout_is_header_line_then_le_f32() {
        let bytes = sample().to_bytes().unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["tensors"][1]["name"], "a.bias");
        assert_eq!(header["tensors"][1]["offset"], 24);
        assert_eq!(bytes.len(), nl + 1 + 7 * 4);
        assert_eq!(&bytes[nl + 1..nl + 5], &(-1.0f32).to_le_bytes());
    }

    #[test]
    fn roundtrip_preserves_order_and_values() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tensors.keys().collect::<Vec<_>>(), ["b.weight", "a.bias"]);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(Checkpoint::from_bytes(&bytes, Path::new("mem")), Err(Error::Format { .. })));
    }
}
