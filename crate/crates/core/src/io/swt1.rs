//! `SWT1` tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "SWT1" (53 57 54 31)
//! 4       4         u32 version = 1
//! 8       4         u32 ndim
//! 12      8*ndim    u64 dims
//! ..      8*prod    f64 payload, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::FeatureMap;

pub const MAGIC: [u8; 4] = *b"SWT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: Vec<f64>) -> Result<Self> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_feature_map(x: &FeatureMap) -> Self {
        let (c, h, w) = x.dims();
        Self {
            dims: vec![c as u64, h as u64, w as u64],
            data: x.as_slice().to_vec(),
        }
    }

    pub fn into_feature_map(self) -> Result<FeatureMap> {
        match self.dims.as_slice() {
            &[c, h, w] => FeatureMap::new(c as usize, h as usize, w as usize, self.data),
            other => Err(Error::format(
                "SWT1 tensor",
                format!("expected 3 dims for a feature map, got {other:?}"),
            )),
        }
    }

    pub fn encoded_len(&self) -> usize {
        12 + 8 * self.dims.len() + 8 * self.data.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Decodes one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(Error::format(
                "SWT1 tensor",
                format!("bad magic {magic:02x?}"),
            ));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::format(
                "SWT1 tensor",
                format!("unsupported version {version}"),
            ));
        }
        let ndim = cur.u32()? as usize;
        let dims = (0..ndim).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?;
        let count = element_count(&dims)?;
        let payload = cur.take(count.checked_mul(8).ok_or_else(overflow)?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Self { dims, data }, cur.pos))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (t, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::format(
                "SWT1 tensor",
                format!("{} trailing bytes", bytes.len() - used),
            ));
        }
        Ok(t)
    }
}

fn overflow() -> Error {
    Error::format("SWT1 tensor", "dimension product overflows")
}

fn element_count(dims: &[u64]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .ok_or_else(overflow)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(overflow)?;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::format(
                "SWT1 tensor",
                format!("truncated: need {n} bytes at offset {}", self.pos),
            )
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes)
}

/// Reads back-to-back tensors until the buffer is exhausted.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let (t, used) = Tensor::decode_prefix(rest)?;
        out.push(t);
        rest = &rest[used..];
    }
    Ok(out)
}
