use std::io::Cursor;

use crate::error::{Error, Result};

use super::GrayImage;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("png: {e}"))
}

pub fn read_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Format(format!(
            "only grayscale PNG is supported, got {:?}",
            info.color_type
        )));
    }
    let depth = info.bit_depth;
    if !matches!(depth, png::BitDepth::Eight | png::BitDepth::Sixteen) {
        return Err(Error::Format(format!(
            "unsupported PNG bit depth {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Corrupt("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let buf = &buf[..frame.buffer_size()];
    let mut data = Vec::with_capacity(width * height);
    for row in buf.chunks_exact(frame.line_size) {
        match depth {
            png::BitDepth::Sixteen => data.extend(
                row[..2 * width]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64),
            ),
            _ => data.extend(row[..width].iter().map(|&b| b as f64)),
        }
    }
    GrayImage::new(width, height, data)
}

pub fn write_png(img: &GrayImage, sixteen_bit: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        let mut raw = Vec::with_capacity(img.data.len() * if sixteen_bit { 2 } else { 1 });
        if sixteen_bit {
            enc.set_depth(png::BitDepth::Sixteen);
            for &v in &img.data {
                raw.extend_from_slice(&(v.round().clamp(0.0, 65535.0) as u16).to_be_bytes());
            }
        } else {
            enc.set_depth(png::BitDepth::Eight);
            raw.extend(img.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
        }
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&raw).map_err(png_err)?;
    }
    Ok(out)
}

/// 8-bit RGB PNG, used for overlays.
pub fn write_rgb_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::arg("rgb buffer does not match dimensions"));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(rgb).map_err(png_err)?;
    }
    Ok(out)
}
