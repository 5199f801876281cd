//! `BALF` binary model files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "BALF" version
//! depth n_stages stage_width[n_stages] block grid head_hidden
//!     se_reduction expansion rmab(0|1) in_channels
//! n_params { name_len name_bytes rank dim[rank] f32_le[numel] }*
//! ```
//!
//! Parameters appear in the model's canonical order.

use std::path::Path;

use crate::blocks::ParamStore;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensorgrad::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"BALF";
pub const MODEL_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Format { kind: "model file", msg: msg.into() }
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let c = model.config();
    let mut out = MODEL_MAGIC.to_vec();
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    push_u32(&mut out, c.depth as usize)?;
    push_u32(&mut out, c.stage_channels.len())?;
    for &w in &c.stage_channels {
        push_u32(&mut out, w)?;
    }
    for v in [c.block, c.grid, c.head_hidden, c.se_reduction, c.expansion, usize::from(c.rmab), c.in_channels] {
        push_u32(&mut out, v)?;
    }
    let params = model.params();
    push_u32(&mut out, params.len())?;
    for (name, t) in params.iter() {
        push_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        push_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            push_u32(&mut out, d)?;
        }
        for v in t.data() {
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
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MODEL_MAGIC.as_slice()) {
        return Err(bad("missing BALF magic"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION as usize {
        return Err(bad(format!("unsupported version {version} (expected {MODEL_VERSION})")));
    }
    let depth = r.u32()?;
    let n_stages = r.u32()?;
    if n_stages > 16 {
        return Err(bad(format!("implausible stage count {n_stages}")));
    }
    let stage_channels = (0..n_stages).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = r.u32()?;
    }
    let [block, grid, head_hidden, se_reduction, expansion, rmab, in_channels] = f;
    if rmab > 1 {
        return Err(bad(format!("rmab flag must be 0 or 1, got {rmab}")));
    }
    let config = ModelConfig {
        depth: depth as u32,
        stage_channels,
        block,
        grid,
        head_hidden,
        se_reduction,
        expansion,
        rmab: rmab == 1,
        in_channels,
    };
    config.validate()?;
    let n_params = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..n_params {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("parameter name is not UTF-8"))?;
        let rank = r.u32()?;
        if rank > 8 {
            return Err(bad(format!("parameter {name} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflow"))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| bad("shape overflow"))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        store.insert(name, Tensor::new(&shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Model::from_params(&config, store)
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    decode_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
