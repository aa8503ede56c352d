//! `.ssle` embedding files.
//!
//! Little-endian, no padding: magic `SSLE`, then `u32` version (1), layers,
//! frames, dim, stride in samples and sample rate, then
//! `layers * frames * dim` `f32` values, layer-major then frame-major.
//! Values are stored as `f32`, so writing rounds each entry to the nearest
//! `f32`; anything read back from a file round-trips bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::LayerStack;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"SSLE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 6 * 4;

pub fn encode_embedding(stack: &LayerStack) -> Result<Vec<u8>> {
    let fields = [
        VERSION as usize,
        stack.num_layers(),
        stack.frames(),
        stack.dim(),
        stack.stride_samples,
        stack.sample_rate as usize,
    ];
    let n = stack.num_layers() * stack.frames() * stack.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n);
    out.extend_from_slice(MAGIC);
    for f in fields {
        let f = u32::try_from(f).map_err(|_| Error::Format(format!("header field {f} exceeds u32")))?;
        out.extend_from_slice(&f.to_le_bytes());
    }
    for layer in stack.layers() {
        for &v in layer.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embedding(bytes: &[u8]) -> Result<LayerStack> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("not an SSLE file (bad magic)".into()));
    }
    let field = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let version = field(0);
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported SSLE version {version}")));
    }
    let (layers, frames, dim, stride, rate) = (field(1), field(2), field(3), field(4), field(5));
    if layers == 0 || frames == 0 || dim == 0 {
        return Err(Error::Format(format!(
            "empty stack: {layers} layers x {frames} frames x {dim} dims"
        )));
    }
    let per_layer = frames
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("header extents overflow".into()))?;
    let expected = layers
        .checked_mul(per_layer)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("header extents overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mats = values
        .chunks_exact(per_layer)
        .map(|c| Matrix::from_vec(frames, dim, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    LayerStack::new(mats, stride, rate as u32).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_embedding_file(stack: &LayerStack, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode_embedding(stack)?)
}

pub fn read_embedding_file(path: &Path) -> Result<LayerStack> {
    decode_embedding(&fsutil::read(path)?)
}

/// Every `*.ssle` file in `dir`, keyed by file stem.
pub fn read_embedding_dir(dir: &Path) -> Result<BTreeMap<String, LayerStack>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "ssle") {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let stack = read_embedding_file(&path).map_err(|e| match e {
                Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
                other => other,
            })?;
            out.insert(stem, stack);
        }
    }
    Ok(out)
}
