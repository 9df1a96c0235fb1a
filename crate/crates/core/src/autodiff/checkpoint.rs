//! Flat binary parameter container.
//!
//! Layout (little endian): magic `DSRP`, version `u32`, flags `u32`
//! (bit 0: Adam state, bit 1: spectral vectors), count `u32`, then per
//! parameter: name length `u32` + UTF-8 name, rank `u32`, extents `u32`
//! each, values `f32` each; optionally Adam step `u64`, `m`, `v`; optionally
//! a presence byte followed by `u` and `v` lengths and `f32` values.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::param::{AdamState, SpectralState};
use super::{Module, Real, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DSRP";
const VERSION: u32 = 1;
const FLAG_ADAM: u32 = 1;
const FLAG_SPECTRAL: u32 = 2;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_values<T: Real>(out: &mut Vec<u8>, vals: &[T]) {
    for v in vals {
        out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
    }
}

/// Serializes every parameter of `module` in visiting order.
pub fn encode_checkpoint<T: Real>(module: &dyn Module<T>, include_adam: bool) -> Vec<u8> {
    let params = module.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    let flags = FLAG_SPECTRAL | if include_adam { FLAG_ADAM } else { 0 };
    put_u32(&mut out, flags as usize);
    put_u32(&mut out, params.len());
    for p in params {
        put_u32(&mut out, p.name().len());
        out.extend_from_slice(p.name().as_bytes());
        put_u32(&mut out, p.shape().len());
        for &d in p.shape() {
            put_u32(&mut out, d);
        }
        put_values(&mut out, p.value().data());
        if include_adam {
            let s = p.adam_state();
            out.extend_from_slice(&s.step.to_le_bytes());
            put_values(&mut out, &s.m);
            put_values(&mut out, &s.v);
        }
        match p.spectral_state() {
            Some(s) => {
                out.push(1);
                put_u32(&mut out, s.u.len());
                put_u32(&mut out, s.v.len());
                put_values(&mut out, &s.u);
                put_values(&mut out, &s.v);
            }
            None => out.push(0),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn values<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect())
    }
}

struct Entry<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    adam: Option<AdamState<T>>,
    spectral: Option<SpectralState<T>>,
}

/// Loads values (and any stored optimizer/spectral state) into `module`.
/// Names and shapes must match exactly.
pub fn decode_checkpoint<T: Real>(bytes: &[u8], module: &mut dyn Module<T>) -> Result<()> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let flags = r.u32()? as u32;
    let count = r.u32()?;
    let mut entries = HashMap::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = r.values(n)?;
        let adam = if flags & FLAG_ADAM != 0 {
            let step = r.u64()?;
            Some(AdamState {
                step,
                m: r.values(n)?,
                v: r.values(n)?,
            })
        } else {
            None
        };
        let spectral = if flags & FLAG_SPECTRAL != 0 && r.take(1)?[0] == 1 {
            let (nu, nv) = (r.u32()?, r.u32()?);
            Some(SpectralState {
                u: r.values(nu)?,
                v: r.values(nv)?,
            })
        } else {
            None
        };
        if entries
            .insert(name.clone(), Entry { shape, values, adam, spectral })
            .is_some()
        {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }

    let mut problem = None;
    let mut seen = 0;
    module.visit_params_mut(&mut |p| {
        if problem.is_some() {
            return;
        }
        let Some(e) = entries.remove(p.name()) else {
            problem = Some(format!("missing parameter `{}`", p.name()));
            return;
        };
        if e.shape != p.shape() {
            problem = Some(format!("`{}`: stored {:?}, expected {:?}", p.name(), e.shape, p.shape()));
            return;
        }
        seen += 1;
        p.set_value(Tensor::new(e.shape, e.values).expect("length checked on read"));
        if let Some(a) = e.adam {
            p.adam = a;
        }
        if e.spectral.is_some() {
            p.spectral = e.spectral;
        }
    });
    if let Some(msg) = problem {
        return Err(Error::Checkpoint(msg));
    }
    if !entries.is_empty() {
        let mut extra: Vec<_> = entries.into_keys().collect();
        extra.sort();
        return Err(Error::Checkpoint(format!("unknown parameters {extra:?}")));
    }
    debug_assert_eq!(seen, count);
    Ok(())
}

pub fn save_checkpoint<T: Real>(path: &Path, module: &dyn Module<T>, include_adam: bool) -> Result<()> {
    std::fs::write(path, encode_checkpoint(module, include_adam)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path, module: &mut dyn Module<T>) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, module)
}

/// SHA-256 over parameter names and values, used to verify that frozen
/// components stay untouched.
pub fn param_digest<T: Real>(module: &dyn Module<T>) -> String {
    let mut h = Sha256::new();
    for p in module.params() {
        h.update(p.name().as_bytes());
        for v in p.value().data() {
            h.update(v.f64().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
