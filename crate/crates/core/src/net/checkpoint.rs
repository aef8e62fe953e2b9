//! Binary checkpoint: magic line, spec JSON, metadata JSON, named tensors.
//!
//! Layout after the magic: `u32` spec length + spec JSON, `u32` metadata
//! length + metadata JSON, `u8` dtype length + dtype tag, `u64` init seed,
//! `u32` tensor count, then per tensor `u32` name length, name, `u32` rank,
//! `u64` dims, little-endian values. All integers little-endian.

use std::path::Path;

use super::model::{Model, ModelParams, ModelSpec};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const MAGIC: &[u8] = b"GESTPROP-CKPT v1\n";

pub fn encode<T: Real>(model: &Model<T>, metadata: &serde_json::Value) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    let spec = serde_json::to_vec(&model.spec).map_err(|e| Error::json("model spec", e))?;
    let meta = serde_json::to_vec(metadata).map_err(|e| Error::json("checkpoint metadata", e))?;
    for blob in [&spec, &meta] {
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(blob);
    }
    out.push(T::DTYPE.len() as u8);
    out.extend_from_slice(T::DTYPE.as_bytes());
    out.extend_from_slice(&model.params.seed.to_le_bytes());
    out.extend_from_slice(&(model.params.tensors.len() as u32).to_le_bytes());
    for (name, t) in &model.params.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

fn values<T: Real, S: Real>(raw: &[u8]) -> Vec<T> {
    raw.chunks(S::BYTES)
        .map(|c| T::of(S::read_le(c).f64()))
        .collect()
}

/// Decodes a checkpoint, converting stored values to `T` when the dtypes differ.
pub fn decode<T: Real>(bytes: &[u8], path: &Path) -> Result<(Model<T>, serde_json::Value)> {
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if !bytes.starts_with(MAGIC) {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let n = r.u32().map_err(fail)?;
    let spec: ModelSpec =
        serde_json::from_slice(r.take(n).map_err(fail)?).map_err(|e| fail(e.to_string()))?;
    let n = r.u32().map_err(fail)?;
    let meta: serde_json::Value =
        serde_json::from_slice(r.take(n).map_err(fail)?).map_err(|e| fail(e.to_string()))?;
    let n = r.take(1).map_err(fail)?[0] as usize;
    let dtype = std::str::from_utf8(r.take(n).map_err(fail)?).map_err(|e| fail(e.to_string()))?;
    let width = match dtype {
        "f32" => 4,
        "f64" => 8,
        other => return Err(fail(format!("unknown dtype `{other}`"))),
    };
    let seed = r.u64().map_err(fail)?;
    let count = r.u32().map_err(fail)?;
    let mut tensors = std::collections::BTreeMap::new();
    for _ in 0..count {
        let n = r.u32().map_err(fail)?;
        let name = String::from_utf8(r.take(n).map_err(fail)?.to_vec())
            .map_err(|e| fail(e.to_string()))?;
        let rank = r.u32().map_err(fail)?;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(fail)?;
        let len: usize = shape.iter().product();
        let raw = r.take(len * width).map_err(fail)?;
        let data = if width == 4 {
            values::<T, f32>(raw)
        } else {
            values::<T, f64>(raw)
        };
        tensors.insert(name, Tensor { shape, data });
    }
    if r.pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = Model::new(spec, ModelParams { seed, tensors }).map_err(|e| fail(e.to_string()))?;
    Ok((model, meta))
}

pub fn save<T: Real>(path: &Path, model: &Model<T>, metadata: &serde_json::Value) -> Result<()> {
    write_atomic(path, &encode(model, metadata)?)
}

pub fn load<T: Real>(path: &Path) -> Result<(Model<T>, serde_json::Value)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
