//! MRC2014 subset: single 2D sections in modes 0, 1, 2 and 6.

use crate::error::{Error, Result};

use super::{GrayImage, ImageMeta};

const HEADER_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrcMode {
    /// Mode 0, signed 8-bit.
    Int8,
    /// Mode 1, signed 16-bit.
    Int16,
    /// Mode 2, 32-bit float.
    Float32,
    /// Mode 6, unsigned 16-bit.
    Uint16,
}

impl MrcMode {
    pub fn code(self) -> i32 {
        match self {
            MrcMode::Int8 => 0,
            MrcMode::Int16 => 1,
            MrcMode::Float32 => 2,
            MrcMode::Uint16 => 6,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            0 => Some(MrcMode::Int8),
            1 => Some(MrcMode::Int16),
            2 => Some(MrcMode::Float32),
            6 => Some(MrcMode::Uint16),
            _ => None,
        }
    }

    fn sample_bytes(self) -> usize {
        match self {
            MrcMode::Int8 => 1,
            MrcMode::Int16 | MrcMode::Uint16 => 2,
            MrcMode::Float32 => 4,
        }
    }
}

struct Words<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Words<'_> {
    fn i32(&self, off: usize) -> i32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.big_endian {
            i32::from_be_bytes(b)
        } else {
            i32::from_le_bytes(b)
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.big_endian {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        }
    }

    fn u16(&self, off: usize) -> u16 {
        let b: [u8; 2] = self.bytes[off..off + 2].try_into().unwrap();
        if self.big_endian {
            u16::from_be_bytes(b)
        } else {
            u16::from_le_bytes(b)
        }
    }
}

pub fn read_mrc(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt(format!(
            "MRC header truncated at {} bytes",
            bytes.len()
        )));
    }
    if &bytes[208..212] != b"MAP " {
        return Err(Error::Format("missing MRC 'MAP ' stamp".into()));
    }
    // Machine stamp: 0x44 0x4? little-endian, 0x11 0x11 big-endian.
    let words = Words {
        bytes,
        big_endian: bytes[212] == 0x11,
    };
    let (nx, ny, nz) = (words.i32(0), words.i32(4), words.i32(8));
    let mode_code = words.i32(12);
    let mode = MrcMode::from_code(mode_code)
        .ok_or_else(|| Error::Format(format!("unsupported MRC mode {mode_code}")))?;
    if nx <= 0 || ny <= 0 || nz <= 0 {
        return Err(Error::Corrupt(format!(
            "invalid MRC dimensions {nx}x{ny}x{nz}"
        )));
    }
    if nz != 1 {
        return Err(Error::Format(format!(
            "MRC stacks/volumes are not supported (nz = {nz})"
        )));
    }
    let nsymbt = words.i32(92);
    if nsymbt < 0 {
        return Err(Error::Corrupt(format!(
            "negative extended header size {nsymbt}"
        )));
    }
    let (width, height) = (nx as usize, ny as usize);
    let offset = HEADER_LEN + nsymbt as usize;
    let need = width * height * mode.sample_bytes();
    if bytes.len() < offset + need {
        return Err(Error::Corrupt(format!(
            "MRC payload truncated: need {} bytes after offset {offset}, have {}",
            need,
            bytes.len().saturating_sub(offset)
        )));
    }

    let payload = Words {
        bytes: &bytes[offset..offset + need],
        big_endian: words.big_endian,
    };
    let mut clamped = 0usize;
    let mut data = Vec::with_capacity(width * height);
    for i in 0..width * height {
        let v = match mode {
            MrcMode::Int8 => payload.bytes[i] as i8 as f64,
            MrcMode::Int16 => payload.u16(2 * i) as i16 as f64,
            MrcMode::Uint16 => payload.u16(2 * i) as f64,
            MrcMode::Float32 => {
                let v = payload.f32(4 * i);
                if !v.is_finite() {
                    return Err(Error::Corrupt(format!(
                        "non-finite MRC sample at index {i}"
                    )));
                }
                v as f64
            }
        };
        if v < 0.0 {
            clamped += 1;
            data.push(0.0);
        } else {
            data.push(v);
        }
    }

    let mx = words.i32(28);
    let xlen = words.f32(40) as f64;
    let pixel_size = (mx > 0 && xlen > 0.0).then(|| xlen / mx as f64);
    Ok(GrayImage {
        width,
        height,
        data,
        id: String::new(),
        meta: ImageMeta {
            pixel_size,
            clamped_negative: clamped,
        },
    })
}

/// Little-endian MRC2014 with a single section. Integer modes round and
/// saturate to the sample range.
pub fn write_mrc(img: &GrayImage, mode: MrcMode) -> Result<Vec<u8>> {
    let n = img.data.len();
    let mut out = vec![0u8; HEADER_LEN + n * mode.sample_bytes()];
    let put_i32 =
        |buf: &mut [u8], off: usize, v: i32| buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
    let put_f32 =
        |buf: &mut [u8], off: usize, v: f32| buf[off..off + 4].copy_from_slice(&v.to_le_bytes());

    let stored: Vec<f64> = img
        .data
        .iter()
        .map(|&v| match mode {
            MrcMode::Int8 => v.round().clamp(-128.0, 127.0),
            MrcMode::Int16 => v.round().clamp(-32768.0, 32767.0),
            MrcMode::Uint16 => v.round().clamp(0.0, 65535.0),
            MrcMode::Float32 => v as f32 as f64,
        })
        .collect();
    let (mut dmin, mut dmax, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in &stored {
        dmin = dmin.min(v);
        dmax = dmax.max(v);
        sum += v;
    }
    let dmean = sum / n as f64;
    let rms = (stored.iter().map(|v| (v - dmean).powi(2)).sum::<f64>() / n as f64).sqrt();

    let h = &mut out[..HEADER_LEN];
    put_i32(h, 0, img.width as i32);
    put_i32(h, 4, img.height as i32);
    put_i32(h, 8, 1);
    put_i32(h, 12, mode.code());
    put_i32(h, 28, img.width as i32);
    put_i32(h, 32, img.height as i32);
    put_i32(h, 36, 1);
    let apix = img.meta.pixel_size.unwrap_or(1.0) as f32;
    put_f32(h, 40, apix * img.width as f32);
    put_f32(h, 44, apix * img.height as f32);
    put_f32(h, 48, apix);
    for (i, angle) in [90.0f32, 90.0, 90.0].into_iter().enumerate() {
        put_f32(h, 52 + 4 * i, angle);
    }
    put_i32(h, 64, 1);
    put_i32(h, 68, 2);
    put_i32(h, 72, 3);
    put_f32(h, 76, dmin as f32);
    put_f32(h, 80, dmax as f32);
    put_f32(h, 84, dmean as f32);
    put_i32(h, 108, 20140);
    h[208..212].copy_from_slice(b"MAP ");
    h[212..216].copy_from_slice(&[0x44, 0x44, 0x00, 0x00]);
    put_f32(h, 216, rms as f32);

    let body = &mut out[HEADER_LEN..];
    for (i, &v) in stored.iter().enumerate() {
        match mode {
            MrcMode::Int8 => body[i] = (v as i8) as u8,
            MrcMode::Int16 => body[2 * i..2 * i + 2].copy_from_slice(&(v as i16).to_le_bytes()),
            MrcMode::Uint16 => body[2 * i..2 * i + 2].copy_from_slice(&(v as u16).to_le_bytes()),
            MrcMode::Float32 => body[4 * i..4 * i + 4].copy_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}
