//! Binary weight container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes  "TPWF"
//! version      u32      1
//! arch id      u32 length + UTF-8 bytes
//! tensor count u32
//! per tensor:
//!   name       u32 length + UTF-8 bytes
//!   rank       u32
//!   extents    rank × u32
//!   data       product(extents) × f32, row-major
//! ```
//!
//! Kernels are `[3, 3, in, out]` for convolutions and `[in, out]` for dense
//! layers, which is the layout Keras uses, so exported Keras weights need
//! no transposition.

use std::fs;
use std::path::Path;

use super::model::{build_architecture, ArchId, Model};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"TPWF";
pub const VERSION: u32 = 1;

/// Encodes every parameter of `model`. Values are narrowed to `f32`.
pub fn encode(model: &Model) -> Vec<u8> {
    let params = model.parameters();
    let mut out = Vec::with_capacity(16 + model.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, model.arch().as_str());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        put_str(&mut out, &name);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

/// Loads a model of whatever architecture the file declares.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, None)
}

/// Loads a file that must hold weights for `expected`.
pub fn load_weights_as(path: impl AsRef<Path>, expected: ArchId) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, Some(expected))
}

struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Parses a container. With `expected` set, tensors are matched against
/// that architecture and the first mismatch is reported by name.
pub fn decode(bytes: &[u8], expected: Option<ArchId>) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic; not a TPWF weight file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let arch_name = r.string()?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Corruption(format!(
                "tensor {name}: implausible rank {rank}"
            )));
        }
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Corruption(format!("tensor {name}: bad extents {shape:?}")))?;
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Corruption("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        records.push(TensorRecord { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }

    let arch = match expected {
        Some(a) => a,
        None => arch_name.parse().map_err(|_| {
            Error::Format(format!("file declares unknown architecture {arch_name:?}"))
        })?,
    };
    let mut model = build_architecture(arch)?;
    let slots: Vec<(String, Vec<usize>)> = model
        .parameters()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    for (i, ((name, shape), rec)) in slots.iter().zip(&records).enumerate() {
        if *name != rec.name || *shape != rec.shape {
            return Err(Error::Format(format!(
                "tensor #{i}: {arch} expects {name} {shape:?}, file has {} {:?}",
                rec.name, rec.shape
            )));
        }
    }
    if records.len() != slots.len() {
        return Err(Error::Format(format!(
            "{arch} has {} parameter tensors, file has {}",
            slots.len(),
            records.len()
        )));
    }
    if arch_name != arch.as_str() {
        return Err(Error::Format(format!(
            "file declares architecture {arch_name}, expected {arch}"
        )));
    }
    for (i, rec) in records.into_iter().enumerate() {
        let t = Tensor::new(rec.shape, rec.data)
            .map_err(|e| Error::Corruption(format!("tensor {}: {e}", rec.name)))?;
        model.set_parameter(i, t)?;
    }
    Ok(model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Corruption(format!(
                    "file truncated: needed {n} bytes at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Corruption("invalid UTF-8 in name".into()))
    }
}
