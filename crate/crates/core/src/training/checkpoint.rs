//! Versioned tensor container and checkpoint directories.
//!
//! Container layout, all little-endian: `"RORP"`, `u32` version, `u32`
//! record count, then per record `u32` name length, name bytes, `u32` rank,
//! `rank` x `u32` dims and the `f32` payload.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

pub const MAGIC: &[u8; 4] = b"RORP";
pub const VERSION: u32 = 1;

pub const MODEL_FILE: &str = "model.rorp";
pub const META_FILE: &str = "meta.json";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_tensors<P: ParamSet<f32>>(params: &P) -> Vec<u8> {
    let views = params.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(views.len() as u32).to_le_bytes());
    for v in views {
        out.extend_from_slice(&(v.name.len() as u32).to_le_bytes());
        out.extend_from_slice(v.name.as_bytes());
        out.extend_from_slice(&(v.shape.len() as u32).to_le_bytes());
        for &d in &v.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in v.data {
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
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<TensorRecord>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
        let data = r
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push(TensorRecord { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

/// Copies records into `params`, requiring the same tensor names and shapes.
pub fn restore<P: ParamSet<f32>>(records: Vec<TensorRecord>, params: &mut P) -> Result<()> {
    let mut by_name: HashMap<String, TensorRecord> = records.into_iter().map(|r| (r.name.clone(), r)).collect();
    let shapes: Vec<(String, Vec<usize>)> = params.params().into_iter().map(|p| (p.name, p.shape)).collect();
    for (view, (name, shape)) in params.params_mut().into_iter().zip(shapes) {
        let rec = by_name
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if rec.shape != shape {
            return Err(Error::Checkpoint(format!(
                "{name}: stored shape {:?}, expected {shape:?}",
                rec.shape
            )));
        }
        view.data.copy_from_slice(&rec.data);
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok(())
}

pub fn save_tensors<P: ParamSet<f32>>(path: impl AsRef<Path>, params: &P) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensors(params)).map_err(|e| Error::io(path, e))
}

pub fn load_tensors<P: ParamSet<f32>>(path: impl AsRef<Path>, params: &mut P) -> Result<()> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    restore(decode_tensors(&bytes)?, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub step: u64,
    pub epoch: usize,
    /// SHA-256 of the training config.
    pub config_hash: String,
    /// Mean loss of the last completed epoch.
    pub last_epoch_loss: Option<f64>,
}

impl CheckpointMeta {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(META_FILE);
        let text = serde_json::to_string_pretty(self).expect("meta serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Self = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if meta.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", meta.version)));
        }
        Ok(meta)
    }
}

pub fn model_path(dir: &Path) -> PathBuf {
    dir.join(MODEL_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{MappingConfig, MappingNetwork};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> MappingNetwork<f32> {
        let cfg = MappingConfig {
            input_dim: 3,
            seq_len: 2,
            d_model: 4,
            n_blocks: 1,
            n_state: 2,
        };
        MappingNetwork::init(&mut ChaCha8Rng::seed_from_u64(0), cfg)
    }

    #[test]
    fn roundtrip_is_exact() {
        let a = net();
        let bytes = encode_tensors(&a);
        assert_eq!(&bytes[..4], b"RORP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        let mut b = MappingNetwork::zeros(a.config);
        restore(decode_tensors(&bytes).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode_tensors(&b), bytes);
    }

    #[test]
    fn first_record_layout() {
        let bytes = encode_tensors(&net());
        let nlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        assert_eq!(&bytes[16..16 + nlen], b"expand.weight");
        let rank = u32::from_le_bytes(bytes[16 + nlen..20 + nlen].try_into().unwrap());
        assert_eq!(rank, 2);
    }

    #[test]
    fn rejects_version_and_damage() {
        let mut bytes = encode_tensors(&net());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(decode_tensors(&wrong), Err(Error::Checkpoint(m)) if m.contains("version")));
        let mut b = net();
        bytes.truncate(bytes.len() - 1);
        assert!(decode_tensors(&bytes).is_err());
        assert!(decode_tensors(b"RORX").is_err());

        let other = MappingNetwork::<f32>::zeros(MappingConfig {
            input_dim: 5,
            ..b.config
        });
        assert!(restore(decode_tensors(&encode_tensors(&other)).unwrap(), &mut b).is_err());
    }
}
