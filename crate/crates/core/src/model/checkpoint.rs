//! Flat named-tensor file format.
//!
//! Layout (all integers little-endian): magic `IGRMCKPT`, `u32` version,
//! `u32` tensor count, then per tensor a `u32` name length, the UTF-8 name,
//! a `u32` dimension count, one `u64` per dimension and the values as `f64`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IGRMCKPT";
pub const VERSION: u32 = 1;

pub fn encode(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Tensors with one or two dimensions are read back as matrices (a vector becomes one row).
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let dims: Vec<usize> = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let (rows, cols) = match dims.as_slice() {
            [c] => (1, *c),
            [rr, c] => (*rr, *c),
            _ => return Err(Error::Checkpoint(format!("tensor `{name}` has {ndim} dimensions"))),
        };
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        out.push((name, Tensor::from_vec(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn round_trip() {
        let ts = vec![("a".into(), Tensor::from_rows(&[[1.0, -2.5], [3.0, f64::MIN_POSITIVE]]).unwrap()), ("empty".into(), Tensor::zeros(0, 3))];
        assert_eq!(decode(&encode(&ts)).unwrap(), ts);
    }

    #[test]
    fn known_bytes() {
        let bytes = encode(&[("w".into(), Tensor::scalar(1.0))]);
        let mut want = b"IGRMCKPT".to_vec();
        want.extend([1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, b'w', 2, 0, 0, 0]);
        want.extend(1u64.to_le_bytes());
        want.extend(1u64.to_le_bytes());
        want.extend([0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(&[("w".into(), Tensor::scalar(1.0))]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
