//! Binary model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "FLMODEL\0"
//! version    u32      1
//! d_text, d_image, d_model, layers, heads, ff_mult, n_classes   u32 each
//! dropout    f64
//! n_tensors  u32
//! per tensor: name_len u16, name (UTF-8), n u64, n × f64
//! ```
//!
//! Tensors appear in the fixed declaration order of the model, including
//! batch-norm running statistics.

use std::path::Path;

use super::config::ArchConfig;
use super::model::{init_model, FusionModel, Mode};
use crate::fsutil::write_atomic;
use crate::numcore::SeededRng;
use crate::{Error, Result, N_CLASSES};

pub const MODEL_MAGIC: &[u8; 8] = b"FLMODEL\0";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(m: &FusionModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let c = &m.cfg;
    for v in [c.d_text, c.d_image, c.d_model, c.layers, c.heads, c.ff_mult, N_CLASSES] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.dropout.to_le_bytes());
    let tensors = m.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, _, data) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat(format!(
                "truncated file: expected {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<FusionModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported format version {version} (expected {MODEL_VERSION})")));
    }
    let mut dims = [0usize; 7];
    for (d, name) in dims.iter_mut().zip(["d_text", "d_image", "d_model", "layers", "heads", "ff_mult", "n_classes"]) {
        *d = r.u32(name)? as usize;
    }
    if dims[6] != N_CLASSES {
        return Err(Error::ModelFormat(format!("n_classes {} in file, expected {N_CLASSES}", dims[6])));
    }
    let cfg = ArchConfig {
        d_text: dims[0],
        d_image: dims[1],
        d_model: dims[2],
        layers: dims[3],
        heads: dims[4],
        ff_mult: dims[5],
        dropout: r.f64("dropout")?,
    };
    cfg.validate().map_err(|e| Error::ModelFormat(format!("invalid architecture in header: {e}")))?;

    let mut model = init_model(&cfg, &mut SeededRng::new(0))?;
    let n_tensors = r.u32("tensor count")? as usize;
    let mut slots = model.params.tensors_mut();
    if n_tensors != slots.len() {
        return Err(Error::ModelFormat(format!("file has {n_tensors} tensors, architecture needs {}", slots.len())));
    }
    for (name, _, dst) in slots.iter_mut() {
        let len = r.u16("tensor name length")? as usize;
        let found = r.take(len, "tensor name")?;
        if found != name.as_bytes() {
            return Err(Error::ModelFormat(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let n = r.u64("tensor length")?;
        if n != dst.len() as u64 {
            return Err(Error::ModelFormat(format!("tensor {name} has {n} values, expected {}", dst.len())));
        }
        for x in dst.iter_mut() {
            *x = r.f64(name)?;
            if !x.is_finite() {
                return Err(Error::ModelFormat(format!("non-finite value in tensor {name}")));
            }
        }
    }
    drop(slots);
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
    }
    model.mode = Mode::Eval;
    Ok(model)
}

pub fn save_model(m: &FusionModel, path: &Path) -> Result<()> {
    write_atomic(path, &model_to_bytes(m))
}

/// Loads a model in eval mode.
pub fn load_model(path: &Path) -> Result<FusionModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

/// Loads a model and checks that its architecture equals `expected`.
pub fn load_model_with(path: &Path, expected: &ArchConfig) -> Result<FusionModel> {
    let m = load_model(path)?;
    if &m.cfg != expected {
        return Err(Error::ModelFormat(format!(
            "architecture mismatch: file has {:?}, expected {:?}",
            m.cfg, expected
        )));
    }
    Ok(m)
}
