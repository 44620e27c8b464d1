//! Binary checkpoint container.
//!
//! ```text
//! u8       version (= 1)
//! [u8; 4]  magic "NMTC"
//! u32      config length, then the config as UTF-8 JSON
//! u32      tensor count
//! per tensor:
//!   u32 name length, name (UTF-8)
//!   u32 rank, rank × u64 dims
//!   product(dims) × f64
//! ```
//! All integers and floats are little-endian.

use super::{ModelConfig, ModelError, ParameterStore};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"NMTC";

pub fn encode_checkpoint(store: &ParameterStore) -> Vec<u8> {
    let config = serde_json::to_vec(store.config()).expect("config serializes");
    let mut out = Vec::with_capacity(16 + config.len() + store.total() * 8);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(store.tensors().len() as u32).to_le_bytes());
    for (spec, t) in store.specs().iter().zip(store.tensors()) {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParameterStore, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let version = r.take(1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let clen = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(clen)?).map_err(|e| corrupt(format!("config: {e}")))?;
    config.validate()?;
    let count = r.u32()? as usize;
    // Each tensor needs at least its two length prefixes.
    if count > r.remaining() / 8 {
        return Err(corrupt(format!("tensor count {count} exceeds file size")));
    }
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(corrupt(format!("tensor '{name}' has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut elems: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(r.u64()?).map_err(|_| corrupt("dimension overflows"))?;
            elems = elems
                .checked_mul(d)
                .ok_or_else(|| corrupt("shape overflows"))?;
            shape.push(d);
        }
        let bytes = elems
            .checked_mul(8)
            .ok_or_else(|| corrupt("shape overflows"))?;
        let raw = r.take(bytes)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        named.push((name, Tensor::new(shape, data)?));
    }
    if r.remaining() != 0 {
        return Err(corrupt(format!("{} trailing bytes", r.remaining())));
    }
    ParameterStore::from_tensors(&config, named)
}
