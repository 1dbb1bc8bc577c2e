//! Binary PGM (P5), 8- and 16-bit.

use crate::error::{Error, Result};

use super::GrayImage;

fn header_tokens(bytes: &[u8]) -> Result<([usize; 3], usize)> {
    let mut pos = 2;
    let mut vals = [0usize; 3];
    for slot in vals.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Corrupt("PGM header truncated".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Corrupt("malformed PGM header".into()));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Corrupt("malformed PGM header number".into()))?;
    }
    // exactly one whitespace byte before the raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => Ok((vals, pos + 1)),
        _ => Err(Error::Corrupt("PGM header truncated".into())),
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("missing PGM 'P5' magic".into()));
    }
    let ([width, height, maxval], offset) = header_tokens(bytes)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Corrupt(format!(
            "invalid PGM header {width}x{height} maxval {maxval}"
        )));
    }
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    let raster = bytes
        .get(offset..offset + need)
        .ok_or_else(|| Error::Corrupt(format!("PGM raster truncated: need {need} bytes")))?;
    let data = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64).collect()
    };
    GrayImage::new(width, height, data)
}

/// Samples are rounded and saturated to the target depth.
pub fn write_pgm(img: &GrayImage, sixteen_bit: bool) -> Result<Vec<u8>> {
    let maxval = if sixteen_bit { 65535 } else { 255 };
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    for &v in &img.data {
        let s = v.round().clamp(0.0, maxval as f64);
        if sixteen_bit {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    Ok(out)
}
