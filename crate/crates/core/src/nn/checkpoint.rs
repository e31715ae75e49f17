//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "CCRLCKPT"
//! version u32      currently 1
//! count   u32      number of parameters
//! repeated count times:
//!   name_len u32, name (utf-8 bytes)
//!   ndim     u32, dims (u64 each)
//!   values   f64 × product(dims)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParameterSet;
use super::tensor::RealArray;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CCRLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for d in p.value.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format("checkpoint truncated"));
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
}

pub fn decode(bytes: &[u8]) -> Result<ParameterSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("parameter name is not utf-8"))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::format("shape overflow"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params
            .insert(name, RealArray::new(shape, data)?)
            .map_err(|e| Error::format(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint"));
    }
    Ok(params)
}

pub fn save(params: &ParameterSet, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParameterSet> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParameterSet {
        let mut ps = ParameterSet::new();
        ps.insert("a.w", RealArray::new(vec![2, 3], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5, 1e300, -7.25]).unwrap())
            .unwrap();
        ps.insert("a.b", RealArray::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        ps
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ps = sample();
        let back = decode(&encode(&ps)).unwrap();
        for (name, p) in ps.iter() {
            let q = back.get(name).unwrap();
            assert_eq!(p.value.shape(), q.value.shape());
            let a: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = q.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }
}
