//! Binary PGM (P5) and PPM (P6) images, 8- or 16-bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Parse a P5/P6 image into an H×W×C tensor (C = 1 or 3) with values in `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated image header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported image type {other:?}"))),
    };
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad {what} {s:?} in image header")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "invalid image header {width}×{height} max {maxval}"
        )));
    }
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let count = width * height * channels;
    let raster = bytes
        .get(pos..pos + count * bytes_per)
        .ok_or_else(|| Error::Format("truncated image raster".into()))?;
    let scale = 1.0 / maxval as f64;
    let data = if bytes_per == 1 {
        raster.iter().map(|&b| b as f64 * scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 * scale)
            .collect()
    };
    Tensor::new(&[height, width, channels], data)
}

pub fn read_pnm(path: &Path) -> Result<Tensor> {
    decode_pnm(&fs::read(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Encode values in `[0, 1]` (clamped) as P5 or P6 depending on channel count.
pub fn encode_pnm(image: &Tensor, bits: u32) -> Result<Vec<u8>> {
    let (h, w, c) = image
        .dims3()
        .or_else(|_| image.dims2().map(|(h, w)| (h, w, 1)))?;
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::dim(format!("cannot write a {c}-channel image"))),
    };
    let maxval: u32 = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(Error::Config(format!("unsupported bit depth {bits}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n{maxval}\n").into_bytes();
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if bits == 8 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pnm(path: &Path, image: &Tensor, bits: u32) -> Result<()> {
    fs::write(path, encode_pnm(image, bits)?)?;
    Ok(())
}
