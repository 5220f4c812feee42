//! Flat binary tensor format.
//!
//! Layout: the magic bytes `DSCT`, a version byte, a rank byte, `rank`
//! little-endian `u32` dimensions, then little-endian `f32` values in
//! row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"DSCT";
pub const VERSION: u8 = 1;

pub fn write_tensor<W: Write>(tensor: &Tensor, mut w: W) -> Result<()> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| Error::Format(format!("rank {} too large", tensor.rank())))?;
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, rank])?;
    for &d in tensor.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(tensor.len() * 4);
    for &v in tensor.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let fail = |msg: &str| Error::Format(msg.to_string());
    if bytes.len() < 6 {
        return Err(fail("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    if rank == 0 {
        return Err(fail("rank 0"));
    }
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(fail("truncated dimensions"));
    }
    let shape: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(fail("zero dimension"));
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail("dimension overflow"))?;
    let body = &bytes[header..];
    if body.len() != n * 4 {
        return Err(Error::Format(format!(
            "expected {} data bytes, found {}",
            n * 4,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(&shape, data)
}

pub fn save(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(tensor, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&fs::read(path)?)
}
