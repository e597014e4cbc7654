//! Weight files.
//!
//! Layout (little endian): magic `HRLW`, `u16` version, `u32` length plus a
//! JSON config echo, `u32` tensor count, then per tensor a `u32`-prefixed
//! name, a `u32`-prefixed JSON [`MlpConfig`], a `u64` value count and the raw
//! f32 values. Tensors keep the order they were passed in.

use std::io::{Read, Write};
use std::path::Path;

use super::{MlpConfig, MlpParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HRLW";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: Vec<(String, MlpParams<f32>)>,
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

pub fn encode_checkpoint(config: &serde_json::Value, tensors: &[(String, &MlpParams<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_bytes(&mut out, config.to_string().as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, p) in tensors {
        put_bytes(&mut out, name.as_bytes());
        let cfg = serde_json::to_vec(p.config()).expect("MlpConfig serializes");
        put_bytes(&mut out, &cfg);
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn prefixed(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { buf: bytes };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = c.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let bad_json = |e: serde_json::Error| Error::Format(format!("checkpoint json: {e}"));
    let config: serde_json::Value = serde_json::from_slice(c.prefixed()?).map_err(bad_json)?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = String::from_utf8(c.prefixed()?.to_vec()).map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
        let cfg: MlpConfig = serde_json::from_slice(c.prefixed()?).map_err(bad_json)?;
        let len = c.u64()? as usize;
        let raw = c.take(len.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        let params = MlpParams::from_flat(&cfg, data).map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
        tensors.push((name, params));
    }
    if !c.buf.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { config, tensors })
}

pub fn save_checkpoint(path: &Path, config: &serde_json::Value, tensors: &[(String, &MlpParams<f32>)]) -> Result<()> {
    let bytes = encode_checkpoint(config, tensors);
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
