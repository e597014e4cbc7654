//! Binary dataset files.
//!
//! Layout (little-endian): `b"HRLD"`, version `u16`, env kind `u8`,
//! state dim `u16`, action dim `u16`, trajectory count `u64`; then for each
//! trajectory its state count `u32`, the states and the actions as row-major
//! `f32`; finally a `u64` byte length and the JSON metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dataset::{Dataset, DatasetBuilder, DatasetMeta, EnvKind};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"HRLD";
pub const DATASET_VERSION: u16 = 1;

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    let state_dim = u16::try_from(ds.state_dim()).map_err(std::io::Error::other)?;
    let action_dim = u16::try_from(ds.action_dim()).map_err(std::io::Error::other)?;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&[ds.env_kind().code()])?;
    w.write_all(&state_dim.to_le_bytes())?;
    w.write_all(&action_dim.to_le_bytes())?;
    w.write_all(&(ds.num_trajectories() as u64).to_le_bytes())?;
    for traj in ds.trajectories() {
        let len = u32::try_from(traj.len()).map_err(std::io::Error::other)?;
        w.write_all(&len.to_le_bytes())?;
        for t in 0..traj.len() {
            write_f32s(&mut w, traj.state(t))?;
        }
        for t in 0..traj.transitions() {
            write_f32s(&mut w, traj.action(t))?;
        }
    }
    let meta = serde_json::to_vec(&ds.meta).map_err(std::io::Error::other)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.flush()
}

fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("truncated file while reading {what}")))?;
        Ok(buf)
    }

    fn f32s(&mut self, out: &mut Vec<f32>, count: usize, what: &str) -> Result<()> {
        let mut buf = vec![0u8; count * 4];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("truncated file while reading {what}")))?;
        out.clear();
        out.extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        Ok(())
    }
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>("magic")? != DATASET_MAGIC {
        return Err(Error::Format("bad magic, not a dataset file".into()));
    }
    let version = u16::from_le_bytes(r.bytes::<2>("version")?);
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let kind = EnvKind::from_code(r.bytes::<1>("env kind")?[0])?;
    let state_dim = u16::from_le_bytes(r.bytes::<2>("state dim")?) as usize;
    let action_dim = u16::from_le_bytes(r.bytes::<2>("action dim")?) as usize;
    if state_dim == 0 || action_dim == 0 {
        return Err(Error::Format("zero state or action dimension".into()));
    }
    let count = u64::from_le_bytes(r.bytes::<8>("trajectory count")?);
    let placeholder = DatasetMeta {
        generator: String::new(),
        seed: 0,
        horizon: None,
        env_seed: None,
        goal_tol: None,
        params: serde_json::Value::Null,
    };
    let mut b = DatasetBuilder::new(kind, state_dim, action_dim, placeholder);
    let (mut states, mut actions) = (Vec::new(), Vec::new());
    for k in 0..count {
        let len = u32::from_le_bytes(r.bytes::<4>("trajectory length")?) as usize;
        if len < 2 {
            return Err(Error::Format(format!("trajectory {k} has {len} states")));
        }
        r.f32s(&mut states, len * state_dim, "states")?;
        r.f32s(&mut actions, (len - 1) * action_dim, "actions")?;
        b.push(&states, &actions)
            .map_err(|e| Error::Format(format!("trajectory {k}: {e}")))?;
    }
    let meta_len = u64::from_le_bytes(r.bytes::<8>("metadata length")?) as usize;
    let mut meta = Vec::new();
    (&mut r.inner)
        .take(meta_len as u64)
        .read_to_end(&mut meta)
        .map_err(|e| Error::Format(format!("metadata: {e}")))?;
    if meta.len() != meta_len {
        return Err(Error::Format("truncated file while reading metadata".into()));
    }
    let mut ds = b.finish();
    ds.meta = serde_json::from_slice(&meta).map_err(|e| Error::Format(format!("metadata json: {e}")))?;
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after metadata".into()));
    }
    Ok(ds)
}

/// Write atomically via a temporary sibling file.
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_dataset(ds, BufWriter::new(file)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}
