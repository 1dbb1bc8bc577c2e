//! Image containers, file formats, normalization and Gaussian smoothing.
//!
//! Every stage of the pipeline consumes a [`GrayImage`]; the hole-localization
//! stage additionally consumes a [`ProbabilityMap`]. Both are plain row-major
//! buffers, immutable once constructed.

mod mrc;
mod pgm;
mod pmap;
mod pngio;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mrc::{read_mrc, write_mrc, MrcMode};
pub use pgm::{read_pgm, write_pgm};
pub use pmap::{load_pmap, read_pmap, save_pmap, write_pmap, PMAP_MAGIC, PMAP_VERSION};
pub use pngio::{read_png, write_png, write_rgb_png};

/// Metadata carried alongside pixel data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    /// Pixel size in Ångström, when the source file records one (MRC only).
    pub pixel_size: Option<f64>,
    /// Number of negative samples clamped to zero while loading.
    pub clamped_negative: usize,
}

/// Single-channel image with real intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub id: String,
    pub meta: ImageMeta,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::arg(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite intensity at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
            id: String::new(),
            meta: ImageMeta::default(),
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
            id: String::new(),
            meta: ImageMeta::default(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Counter-clockwise quarter turn.
    pub fn rot90(&self) -> Self {
        let mut out = Self::from_fn(self.height, self.width, |x, y| {
            self.get(self.width - 1 - y, x)
        });
        out.id = self.id.clone();
        out.meta = self.meta.clone();
        out
    }
}

/// Per-pixel hole-center probability, same shape as its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("empty map {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::arg(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg(format!(
                "probability {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Values are clamped into [0, 1].
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0) as f32);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Counter-clockwise quarter turn.
    pub fn rot90(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.width {
            for x in 0..self.height {
                data.push(self.get(self.width - 1 - y, x));
            }
        }
        Self {
            width: self.height,
            height: self.width,
            data,
        }
    }
}

/// One boolean per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Gaussian smoothing width in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParam {
    sigma: f64,
}

impl SmoothingParam {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::arg(format!(
                "sigma must be finite and > 0, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// On-disk raster format, with the sample type used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Mrc(MrcMode),
    /// Binary PGM; `true` selects 16-bit samples.
    Pgm {
        sixteen_bit: bool,
    },
    /// Grayscale PNG; `true` selects 16-bit samples.
    Png {
        sixteen_bit: bool,
    },
}

impl ImageFormat {
    /// Default format for a file extension (`mrc`, `pgm`, `png`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "mrc" | "map" => Some(ImageFormat::Mrc(MrcMode::Float32)),
            "pgm" => Some(ImageFormat::Pgm { sixteen_bit: false }),
            "png" => Some(ImageFormat::Png { sixteen_bit: false }),
            _ => None,
        }
    }
}

/// Decodes an image from raw bytes, dispatching on magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        read_png(bytes)
    } else if bytes.starts_with(b"P5") {
        read_pgm(bytes)
    } else if bytes.len() >= 212 && &bytes[208..212] == b"MAP " {
        read_mrc(bytes)
    } else if bytes.len() < 1024 && bytes.len() >= 16 && looks_like_mrc_prefix(bytes) {
        Err(Error::Corrupt(format!(
            "MRC header truncated at {} bytes",
            bytes.len()
        )))
    } else {
        let n = bytes.len().min(4);
        Err(Error::Format(format!(
            "unknown magic bytes {:?}",
            &bytes[..n]
        )))
    }
}

// Short files can still carry a plausible MRC dims/mode prefix.
fn looks_like_mrc_prefix(bytes: &[u8]) -> bool {
    let word = |i: usize| i32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (nx, ny, nz, mode) = (word(0), word(4), word(8), word(12));
    nx > 0 && ny > 0 && nz > 0 && matches!(mode, 0 | 1 | 2 | 6)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut img = decode_image(&bytes)?;
    if img.id.is_empty() {
        img.id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(img)
}

pub fn encode_image(img: &GrayImage, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Mrc(mode) => write_mrc(img, mode),
        ImageFormat::Pgm { sixteen_bit } => write_pgm(img, sixteen_bit),
        ImageFormat::Png { sixteen_bit } => write_png(img, sixteen_bit),
    }
}

pub fn save_image(img: &GrayImage, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let bytes = encode_image(img, format)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Z-score normalization using moments over `mask` (whole image when absent).
///
/// Zero-variance inputs map to all zeros.
pub fn normalize(img: &GrayImage, mask: Option<&PixelMask>) -> Result<GrayImage> {
    let (mean, std) = match mask {
        Some(m) => {
            if m.width != img.width || m.height != img.height {
                return Err(Error::arg(format!(
                    "mask {}x{} does not match image {}x{}",
                    m.width, m.height, img.width, img.height
                )));
            }
            let selected: Vec<f64> = img
                .data
                .iter()
                .zip(&m.bits)
                .filter(|(_, &b)| b)
                .map(|(&v, _)| v)
                .collect();
            if selected.is_empty() {
                return Err(Error::arg("normalization mask is empty"));
            }
            moments(&selected)
        }
        None => moments(&img.data),
    };
    let data = if std < 1e-12 {
        vec![0.0; img.data.len()]
    } else {
        img.data.iter().map(|v| (v - mean) / std).collect()
    };
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        data,
        id: img.id.clone(),
        meta: img.meta.clone(),
    })
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Types that can be smoothed with a normalized Gaussian kernel.
pub trait Blur: Sized {
    fn gaussian_blur(&self, s: SmoothingParam) -> Self;
}

impl Blur for GrayImage {
    fn gaussian_blur(&self, s: SmoothingParam) -> Self {
        let data = blur_plane(&self.data, self.width, self.height, s.sigma());
        GrayImage {
            width: self.width,
            height: self.height,
            data,
            id: self.id.clone(),
            meta: self.meta.clone(),
        }
    }
}

impl Blur for ProbabilityMap {
    fn gaussian_blur(&self, s: SmoothingParam) -> Self {
        let src: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        let data = blur_plane(&src, self.width, self.height, s.sigma())
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0) as f32)
            .collect();
        ProbabilityMap {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

pub fn gaussian_blur<T: Blur>(x: &T, s: SmoothingParam) -> T {
    x.gaussian_blur(s)
}

/// Half-kernel `[w0, w1, ..., wr]` of radius `ceil(3 sigma)`, normalized so
/// that `w0 + 2 * sum(w1..wr) == 1`.
pub fn gaussian_half_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    for w in &mut k {
        *w /= total;
    }
    k
}

/// Half-sample symmetric reflection: `-1 -> 0`, `n -> n - 1`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

// Mirrored taps are added pairwise before weighting, so a pass along a
// reversed line gives bit-identical results; averaging both pass orders makes
// the whole blur commute exactly with quarter turns.
fn blur_plane(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_half_kernel(sigma);
    let hv = pass_vertical(&pass_horizontal(src, width, height, &k), width, height, &k);
    let vh = pass_horizontal(&pass_vertical(src, width, height, &k), width, height, &k);
    hv.iter().zip(&vh).map(|(a, b)| 0.5 * (a + b)).collect()
}

fn pass_horizontal(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = k[0] * row[x];
            for (d, &w) in k.iter().enumerate().skip(1) {
                let l = reflect(x as isize - d as isize, width);
                let r = reflect(x as isize + d as isize, width);
                acc += w * (row[l] + row[r]);
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn pass_vertical(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = k[0] * src[y * width + x];
            for (d, &w) in k.iter().enumerate().skip(1) {
                let u = reflect(y as isize - d as isize, height);
                let b = reflect(y as isize + d as isize, height);
                acc += w * (src[u * width + x] + src[b * width + x]);
            }
            out[y * width + x] = acc;
        }
    }
    out
}
