//! `SENP` parameter checkpoints.
//!
//! Layout (little-endian): magic `SENP`, version `u32`, then until end of file
//! one record per tensor: name length `u32`, UTF-8 name bytes, rank `u32`,
//! `rank` extents as `u32`, and the values as `f32`.

use std::path::Path;

use super::{ParamGroup, Tensor};
use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"SENP";
pub const VERSION: u32 = 1;

pub fn encode_params<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated checkpoint: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("not a SENP checkpoint (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SENP version {version}")));
    }
    let mut out = Vec::new();
    while c.pos < bytes.len() {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = c
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let t = Tensor::new(shape, values).map_err(|e| Error::Format(format!("`{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_params(group: &ParamGroup, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode_params(group.iter().map(|(n, p)| (n, &p.value))))
}

pub fn read_params(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode_params(&fsutil::read(path)?)
}

/// Overwrite the values of `group` from a checkpoint whose names and shapes must agree.
pub fn load_into(group: &mut ParamGroup, records: Vec<(String, Tensor)>) -> Result<()> {
    if records.len() != group.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, model expects {}",
            records.len(),
            group.len()
        )));
    }
    for (name, t) in records {
        let p = group
            .get_mut(&name)
            .ok_or_else(|| Error::Format(format!("unexpected tensor `{name}` in checkpoint")))?;
        if p.value.shape() != t.shape() {
            return Err(Error::Format(format!(
                "`{name}`: checkpoint shape {:?}, model shape {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
        p.grad = None;
    }
    Ok(())
}
