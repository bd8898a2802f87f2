//! Binary checkpoint format.
//!
//! ```text
//! "HDYS1"
//! u32 record count
//! per record: u32 name length, name (utf-8), u32 rank, u64 extent * rank,
//!             f64 payload (row-major)
//! u8 optimizer flag
//! if set: "ADAMW", u64 step, f64 lr, weight_decay, beta1, beta2, eps,
//!         then per record: f64 first-moment payload, f64 second-moment payload
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::adamw::{AdamWConfig, AdamWState};
use crate::error::{NumError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"HDYS1";
const OPT_MAGIC: &[u8; 5] = b"ADAMW";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<AdamWState>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, optimizer: Option<&AdamWState>) -> Self {
        Checkpoint {
            params: store
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            write_tensor_header(&mut out, t);
            write_f64s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(OPT_MAGIC);
                out.extend_from_slice(&opt.step.to_le_bytes());
                let c = opt.config;
                write_f64s(&mut out, &[c.lr, c.weight_decay, c.beta1, c.beta2, c.eps]);
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    write_f64s(&mut out, m.data());
                    write_f64s(&mut out, v.data());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(5)? != MAGIC {
            return Err(NumError::Checkpoint("bad magic string".into()));
        }
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| NumError::Checkpoint("parameter name is not utf-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product();
            let data = r.f64s(numel)?;
            params.push((name, Tensor::new(shape, data).map_err(|e| NumError::Checkpoint(e.to_string()))?));
        }
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                if r.take(5)? != OPT_MAGIC {
                    return Err(NumError::Checkpoint("bad optimizer block".into()));
                }
                let step = r.u64()?;
                let c = r.f64s(5)?;
                let config = AdamWConfig {
                    lr: c[0],
                    weight_decay: c[1],
                    beta1: c[2],
                    beta2: c[3],
                    eps: c[4],
                };
                let mut m = Vec::with_capacity(n);
                let mut v = Vec::with_capacity(n);
                for (_, t) in &params {
                    m.push(Tensor::new(t.shape().to_vec(), r.f64s(t.numel())?)?);
                    v.push(Tensor::new(t.shape().to_vec(), r.f64s(t.numel())?)?);
                }
                Some(AdamWState { config, step, m, v })
            }
            f => return Err(NumError::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(NumError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { params, optimizer })
    }

    /// Copies values into a store with identical names and shapes.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(NumError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for ((name, t), p) in self.params.iter().zip(store.iter_mut()) {
            if *name != p.name || t.shape() != p.value.shape() {
                return Err(NumError::Checkpoint(format!(
                    "parameter mismatch: checkpoint {name} {:?} vs model {} {:?}",
                    t.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn write_tensor_header(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
}

fn write_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NumError::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NumError::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
