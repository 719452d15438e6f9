//! Binary checkpoint format.
//!
//! ```text
//! "CAMP" | version u16 | name (u32 len + UTF-8) | seed u64 | count u32
//! per tensor: name (u32 len + UTF-8) | rank u8 | extents u32 * rank | f32 * n
//! ```
//!
//! All integers and floats are little-endian. Tensors are written in model
//! order: trainable parameters, then batch-norm running statistics.

use std::path::Path;

use super::{build, Architecture, ModelError, ModelGraph, ModelOptions, Result};
use crate::tensor::Tensor;
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CAMP";
pub const CHECKPOINT_VERSION: u16 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint<T: Scalar>(model: &ModelGraph<T>) -> Vec<u8> {
    let tensors: Vec<(&str, &Tensor<T>)> = model
        .params
        .iter()
        .map(|p| (p.name.as_str(), &p.value))
        .chain(model.buffers.iter().map(|(n, t)| (n.as_str(), t)))
        .collect();
    let payload: usize = tensors.iter().map(|(_, t)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(payload + 64 * tensors.len() + 64);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, &model.name());
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        put_str(&mut out, name);
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
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
            return Err(ModelError::Checkpoint(format!("truncated reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
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

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ModelError::Checkpoint(format!("{what} is not UTF-8")))
    }
}

fn parse_name(name: &str) -> Result<(Architecture, usize)> {
    let bad = || ModelError::Checkpoint(format!("unrecognized model name {name:?}"));
    let (arch, size) = name.split_once('-').ok_or_else(bad)?;
    let arch: Architecture = arch.parse().map_err(|_| bad())?;
    let size: usize = size.parse().map_err(|_| bad())?;
    Ok((arch, size))
}

/// Decodes a checkpoint. The model is rebuilt from the stored name and seed
/// with `options` (its `input_size` is replaced by the stored one), then
/// every stored tensor overwrites the built one after a shape check.
/// `expected`, when given, must match the stored architecture.
pub fn decode_checkpoint<T: Scalar>(
    bytes: &[u8],
    expected: Option<Architecture>,
    options: &ModelOptions,
) -> Result<ModelGraph<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let name = r.string("model name")?;
    let (arch, size) = parse_name(&name)?;
    if let Some(e) = expected {
        if e != arch {
            return Err(ModelError::WrongArchitecture { expected: e, found: arch });
        }
    }
    let seed = r.u64("seed")?;
    let count = r.u32("tensor count")? as usize;
    let opts = ModelOptions { input_size: size, ..options.clone() };
    let mut model: ModelGraph<T> = build(arch, seed, &opts)?;
    let expected_count = model.params.len() + model.buffers.len();
    if count != expected_count {
        return Err(ModelError::Checkpoint(format!("{name} has {expected_count} tensors, file has {count}")));
    }
    for _ in 0..count {
        let tname = r.string("tensor name")?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let target = if let Some(p) = model.param_mut(&tname) {
            &mut p.value
        } else if let Some((_, t)) = model.buffers.iter_mut().find(|(n, _)| *n == tname) {
            t
        } else {
            return Err(ModelError::UnknownParam(tname));
        };
        if target.shape() != shape.as_slice() {
            return Err(ModelError::ParamShape { name: tname, expected: target.shape().to_vec(), found: shape });
        }
        let raw = r.take(target.len() * 4, "payload")?;
        for (dst, c) in target.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64);
        }
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &ModelGraph<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|source| ModelError::Io { path: path.into(), source })
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
    expected: Option<Architecture>,
    options: &ModelOptions,
) -> Result<ModelGraph<T>> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
    decode_checkpoint(&bytes, expected, options)
}
