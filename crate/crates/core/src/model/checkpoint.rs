//! Binary checkpoint container, all integers little-endian:
//!
//! ```text
//! magic "DSCS" | version u32 | d n frames frame_len blocks reduction (u32 each)
//! | record count u32 | records...
//! record: name length u32 | name utf-8 | rank u32 | dims u32... | f32 data
//! ```

use std::fs;
use std::path::Path;

use autodiff::Tensor;

use super::{DeepScModel, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DSCS";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(model: &DeepScModel<f32>) -> Result<Vec<u8>> {
    let c = model.config();
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION as usize)?;
    for v in [c.d, c.n, c.frames, c.frame_len, c.blocks, c.reduction] {
        put_u32(&mut buf, v)?;
    }
    put_u32(&mut buf, model.params().len())?;
    for (name, p) in model.names().iter().zip(model.params()) {
        put_u32(&mut buf, name.len())?;
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, p.shape().len())?;
        for &d in p.shape() {
            put_u32(&mut buf, d)?;
        }
        for v in p.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<DeepScModel<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let config = ModelConfig {
        d: r.u32()?,
        n: r.u32()?,
        frames: r.u32()?,
        frame_len: r.u32()?,
        blocks: r.u32()?,
        reduction: r.u32()?,
    };
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("record too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let t = Tensor::from_vec(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        tensors.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last record",
            bytes.len() - r.pos
        )));
    }
    DeepScModel::from_named(config, tensors)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &DeepScModel<f32>) -> Result<()> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DeepScModel<f32>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> DeepScModel<f32> {
        let cfg = ModelConfig {
            d: 4,
            n: 2,
            frames: 2,
            frame_len: 4,
            blocks: 1,
            reduction: 2,
        };
        DeepScModel::new(cfg, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode(&m).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.names(), m.names());
        for (a, b) in back.params().iter().zip(m.params()) {
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(back.param_hash(), m.param_hash());
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&p, &m).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap().param_hash(), m.param_hash());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn rejects_hyper_mismatch() {
        let mut bytes = encode(&model()).unwrap();
        // bump d from 4 to 8: parameter shapes no longer match
        bytes[8] = 8;
        assert!(matches!(decode(&bytes), Err(Error::CheckpointIncompatible(_))));
    }
}
