//! Single-file network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"RPLCKPT\0"            magic
//! u32                     format version
//! u64 + bytes             network spec as UTF-8 JSON (includes the regime)
//! u64                     buffer count
//! per buffer: u64 + f32…  element count, then the values
//! ```
//!
//! Buffers follow [`NetworkSpec::buffer_shapes`] order, so Bayesian
//! checkpoints hold `(μ, ρ)` pairs. Shapes are recovered from the spec.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{Network, NetworkSpec};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"RPLCKPT\0";
const VERSION: u32 = 1;

pub fn write_to(net: &Network, mut w: impl Write) -> Result<()> {
    let spec = serde_json::to_vec(net.spec())?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(spec.len() as u64).to_le_bytes())?;
    w.write_all(&spec)?;
    w.write_all(&(net.buffers().len() as u64).to_le_bytes())?;
    for buf in net.buffers() {
        w.write_all(&(buf.len() as u64).to_le_bytes())?;
        let bytes: Vec<u8> = buf.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_from(mut r: impl Read) -> Result<Network> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version).map_err(truncated)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u64(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(truncated)?;
    let spec: NetworkSpec = serde_json::from_slice(&json)
        .map_err(|e| Error::Checkpoint(format!("invalid network spec: {e}")))?;
    let shapes = spec.buffer_shapes();
    let count = read_u64(&mut r)? as usize;
    if count != shapes.len() {
        return Err(Error::Checkpoint(format!("spec needs {} buffers, file has {count}", shapes.len())));
    }
    let mut buffers = Vec::with_capacity(count);
    for (i, shape) in shapes.into_iter().enumerate() {
        let n = read_u64(&mut r)? as usize;
        let expected: usize = shape.iter().product();
        if n != expected {
            return Err(Error::Checkpoint(format!("buffer {i}: expected {expected} values, found {n}")));
        }
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        buffers.push(Tensor::new(shape, data)?);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last buffer".into()));
    }
    Network::from_buffers(spec, buffers)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_to(net, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    read_from(BufReader::new(File::open(path)?))
}
