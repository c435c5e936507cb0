//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `CSEG` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | config length `L` (`u32`) |
//! | L     | network config as UTF-8 JSON |
//! | 4     | parameter block count `P` (`u32`) |
//! | P x   | `u64` element count, then that many `f32` values |
//!
//! Blocks follow the network's parameter declaration order.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{MicroSegNet, NetConfig};
use super::tensor::Real;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSEG";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<T: Real, W: Write>(net: &MicroSegNet<T>, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let config = serde_json::to_vec(net.config())?;
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(config.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&config).map_err(io)?;
    let params = net.params();
    out.write_all(&(params.len() as u32).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::new();
    for p in params {
        buf.clear();
        buf.extend_from_slice(&(p.tensor.len() as u64).to_le_bytes());
        for v in p.tensor.data() {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r, 4)?.try_into().expect("4 bytes")))
}

pub fn read_checkpoint<T: Real, R: Read>(mut input: R) -> Result<MicroSegNet<T>> {
    if read_exact(&mut input, 4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = read_u32(&mut input)? as usize;
    let config: NetConfig = serde_json::from_slice(&read_exact(&mut input, len)?)?;
    let mut net = MicroSegNet::<T>::new(config);
    let count = read_u32(&mut input)? as usize;
    let mut params = net.params_mut();
    if count != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {count} parameter blocks, network declares {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let n = u64::from_le_bytes(read_exact(&mut input, 8)?.try_into().expect("8 bytes")) as usize;
        if n != p.tensor.len() {
            return Err(Error::Checkpoint(format!(
                "block {} has {n} values, expected {}",
                p.name,
                p.tensor.len()
            )));
        }
        let raw = read_exact(&mut input, n * 4)?;
        for (dst, chunk) in p.tensor.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = T::of(f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes"))));
        }
    }
    Ok(net)
}

pub fn save_checkpoint<T: Real>(net: &MicroSegNet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<MicroSegNet<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(bytes.as_slice())
}
