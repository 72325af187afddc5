//! Binary model checkpoints.
//!
//! Layout, all integers little-endian u32: magic `OCLU`, format version,
//! config JSON length and bytes, record count, then per parameter its name
//! length and bytes, dimension count, dimensions and f32 payload.

use std::path::Path;

use oclu_autodiff::Tensor;

use crate::error::{CoreError, Result};
use crate::unet::{UNetConfig, UNetModel};

pub const MAGIC: &[u8; 4] = b"OCLU";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(model: &UNetModel<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = serde_json::to_vec(&model.config)?;
    put_u32(&mut out, config.len());
    out.extend_from_slice(&config);
    put_u32(&mut out, model.params.len());
    for (name, t) in model.names.iter().zip(&model.params) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut out, d);
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
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CoreError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<UNetModel<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(CoreError::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(CoreError::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = r.u32()?;
    let config: UNetConfig = serde_json::from_slice(r.take(len)?)?;
    config.validate()?;
    let layout = config.parameter_layout();
    let count = r.u32()?;
    if count != layout.len() {
        return Err(CoreError::Checkpoint(format!(
            "{count} parameter records but the config needs {}",
            layout.len()
        )));
    }
    let mut names = Vec::with_capacity(count);
    let mut params = Vec::with_capacity(count);
    for (want_name, want_shape) in layout {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CoreError::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if name != want_name || shape != want_shape {
            return Err(CoreError::Checkpoint(format!(
                "record {name} {shape:?} disagrees with config ({want_name} {want_shape:?})"
            )));
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n * 4)?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        names.push(name);
        params.push(Tensor::new(&shape, values)?);
    }
    if r.pos != bytes.len() {
        return Err(CoreError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(UNetModel { config, names, params })
}

pub fn save_checkpoint(model: &UNetModel<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)?).map_err(|e| CoreError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<UNetModel<f32>> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    decode(&bytes)
}
