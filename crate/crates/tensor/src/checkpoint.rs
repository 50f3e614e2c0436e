//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "TKGCKPT1"
//! metadata   u64 length + UTF-8 bytes
//! params     u64 count, then per parameter:
//!              u32 name length + UTF-8 name
//!              u32 rank + u64 per dimension
//!              f64 payload (row-major)
//! optimizer  u8 flag (0 = absent, 1 = Adam)
//!              f64 lr, beta1, beta2, eps, weight_decay
//!              u64 step
//!              per parameter, in the order above: f64 m payload, f64 v payload
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::optim::{Adam, AdamState};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TKGCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form text stored alongside the weights (run configuration).
    pub metadata: String,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

fn err(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

fn io_err(e: std::io::Error) -> TensorError {
    TensorError::Checkpoint(e.to_string())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| err("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| err("invalid UTF-8"))
    }

    fn payload(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| err("payload too large"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn put_payload(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.metadata.len() as u64).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (_, p) in self.params.iter() {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_payload(&mut out, p.value.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                for v in [adam.lr, adam.beta1, adam.beta2, adam.eps, adam.weight_decay] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&adam.state.step.to_le_bytes());
                for (m, v) in adam.state.m.iter().zip(&adam.state.v) {
                    put_payload(&mut out, m.data());
                    put_payload(&mut out, v.data());
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(err("bad magic"));
        }
        let meta_len = r.u64()? as usize;
        let metadata = r.string(meta_len)?;
        let count = r.u64()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let numel = numel.ok_or_else(|| err("shape overflow"))?;
            let data = r.payload(numel)?;
            params.register(name, Tensor::new(shape, data)?)?;
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let (lr, beta1, beta2, eps, weight_decay) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let step = r.u64()?;
                let mut state = AdamState {
                    step,
                    m: Vec::with_capacity(count),
                    v: Vec::with_capacity(count),
                };
                for (_, p) in params.iter() {
                    let shape = p.value.shape().to_vec();
                    state.m.push(Tensor::new(shape.clone(), r.payload(p.value.numel())?)?);
                    state.v.push(Tensor::new(shape, r.payload(p.value.numel())?)?);
                }
                Some(Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                    state,
                })
            }
            other => return Err(err(format!("unknown optimizer tag {other}"))),
        };
        if r.pos != buf.len() {
            return Err(err("trailing bytes"));
        }
        Ok(Self {
            metadata,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path).map_err(io_err)?;
        f.write_all(&self.to_bytes()).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(io_err)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn sample() -> Checkpoint {
        let mut rng = seeded(3);
        let mut params = ParamStore::new();
        params.register("emb.entity", Tensor::randn(vec![4, 3], 1.0, &mut rng)).unwrap();
        params.register("bias", Tensor::vector(vec![f64::MIN_POSITIVE, -0.0, 1e300])).unwrap();
        let mut adam = Adam::new(&params, 1e-3, 1e-5);
        adam.state.step = 17;
        adam.state.m[0] = Tensor::randn(vec![4, 3], 1.0, &mut rng);
        Checkpoint {
            metadata: "d=3\nseed=3\n".into(),
            params,
            optimizer: Some(adam),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), ck.to_bytes());
        for ((_, a), (_, b)) in ck.params.iter().zip(back.params.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn truncated_input_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
    }
}
