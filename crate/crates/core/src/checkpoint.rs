//! Binary model checkpoints.
//!
//! Layout (little endian): magic `ACLMM\x01`, u32 metadata length, JSON
//! metadata, u32 tensor count, then per tensor a u32 name length, the UTF-8
//! name, a u32 rank, u64 dims and the f64 payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{build_model, AclmmModel, ModelConfig, TaskSpec};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 5] = b"ACLMM";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    embedding_dim: usize,
    vocab: Vec<char>,
    tasks: Vec<TaskSpec>,
    seed: u64,
}

pub fn to_bytes(model: &AclmmModel) -> Result<Vec<u8>> {
    let meta = Metadata {
        config: model.config().clone(),
        embedding_dim: model.embedding_dim(),
        vocab: model.vocab().chars().to_vec(),
        tasks: model.tasks().to_vec(),
        seed: model.store().seed(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(model.store().num_values() * 8 + json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.store().len() as u32).to_le_bytes());
    for (name, t) in model.store().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CheckpointTruncated(format!("{what} needs {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::CheckpointShape(format!("{what} {v} does not fit in memory")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<AclmmModel> {
    let mut r = Reader { bytes, pos: 0 };
    let head = r.take(MAGIC.len() + 1, "header")?;
    if &head[..MAGIC.len()] != MAGIC {
        return Err(Error::CheckpointVersion("not a model checkpoint (bad magic)".into()));
    }
    if head[MAGIC.len()] != VERSION {
        return Err(Error::CheckpointVersion(format!(
            "checkpoint version {} is not supported (expected {VERSION})",
            head[MAGIC.len()]
        )));
    }
    let meta_len = r.u32("metadata length")?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::CheckpointShape(format!("metadata: {e}")))?;

    let vocab = Vocabulary::from_chars(meta.vocab.iter().copied())?;
    let placeholder = EmbeddingMatrix::new(DenseTensor::zeros(vec![vocab.len(), meta.embedding_dim]))?;
    let mut model = build_model(&vocab, &placeholder, meta.config, meta.tasks, meta.seed)?;

    let count = r.u32("tensor count")?;
    if count != model.store().len() {
        return Err(Error::CheckpointShape(format!(
            "checkpoint holds {count} tensors, architecture has {}",
            model.store().len()
        )));
    }
    for _ in 0..count {
        let name_len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::CheckpointShape("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64("dimension")?);
        }
        let expected = model
            .store()
            .get(&name)
            .map_err(|_| Error::CheckpointShape(format!("unexpected tensor `{name}`")))?
            .shape()
            .to_vec();
        if shape != expected {
            return Err(Error::CheckpointShape(format!("{name}: stored shape {shape:?}, expected {expected:?}")));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, &format!("payload of {name}"))?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        model.load_values(&name, values)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::CheckpointShape(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save(model: &AclmmModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<AclmmModel> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_model;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = tiny_model(3, &[("a", 2), ("b", 4)], 5);
        let back = from_bytes(&to_bytes(&m).unwrap()).unwrap();
        assert_eq!(back.store(), m.store());
        assert_eq!(back.tasks(), m.tasks());
        let p = m.forward("abc", "b").unwrap();
        let q = back.forward("abc", "b").unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = to_bytes(&tiny_model(2, &[("a", 2)], 1)).unwrap();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::CheckpointTruncated(_))), "cut {cut}");
        }
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = to_bytes(&tiny_model(2, &[("a", 2)], 1)).unwrap();
        bytes[5] = 9;
        assert!(matches!(from_bytes(&bytes), Err(Error::CheckpointVersion(_))));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::CheckpointVersion(_))));
    }

    #[test]
    fn wrong_shape_is_reported() {
        let m = tiny_model(2, &[("a", 2)], 1);
        let mut bytes = to_bytes(&m).unwrap();
        // first tensor name is the embedding; bump its first dim
        let meta_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let name_at = 10 + meta_len + 4;
        let name_len = u32::from_le_bytes(bytes[name_at..name_at + 4].try_into().unwrap()) as usize;
        let dim_at = name_at + 4 + name_len + 4;
        bytes[dim_at] += 1;
        assert!(matches!(from_bytes(&bytes), Err(Error::CheckpointShape(_))));
    }
}
