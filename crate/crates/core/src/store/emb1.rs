//! EMB1: a headered little-endian `f32` matrix.
//!
//! ```text
//! 0..4   b"EMB1"
//! 4..8   count (u32 LE)
//! 8..12  dim   (u32 LE)
//! 12..   count * dim f32 LE, row-major, nothing after
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Emb1Matrix {
    pub count: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Emb1Matrix {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != count * dim {
            return Err(Error::DimensionMismatch {
                expected: count * dim,
                actual: data.len(),
            });
        }
        Ok(Self { count, dim, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; a dim-0 matrix has no data anyway.
        self.data.chunks_exact(self.dim.max(1)).take(self.count)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::MalformedHeader(format!(
                "need {HEADER_LEN} header bytes, file has {}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::MalformedHeader("dim must be positive".into()));
        }
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::MalformedHeader("count * dim overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::TrailingBytes(payload.len() - expected));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self { count, dim, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
