//! RGB overlays for inspecting results.

use gridtarget::imgio::write_rgb_png;
use gridtarget::squares::Point;
use gridtarget::{GrayImage, ProbabilityMap, Result};

pub type Rgb = [u8; 3];

pub const YELLOW: Rgb = [255, 255, 0];
pub const CYAN: Rgb = [0, 255, 255];
pub const RED: Rgb = [255, 0, 0];
pub const GREEN: Rgb = [0, 200, 0];

/// Score ramp from low to high: dark blue, light blue, white, yellow,
/// orange, red.
const RAMP: [Rgb; 6] = [
    [0, 0, 139],
    [135, 206, 250],
    [255, 255, 255],
    [255, 255, 0],
    [255, 165, 0],
    [255, 0, 0],
];

pub fn ramp(t: f64) -> Rgb {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (RAMP[i][c] as f64 * (1.0 - f) + RAMP[i + 1][c] as f64 * f).round() as u8;
    }
    out
}

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    /// Gray background stretched between the image minimum and maximum.
    pub fn from_gray(img: &GrayImage) -> Self {
        let lo = img.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let rgb = img
            .data
            .iter()
            .flat_map(|&v| {
                let g = ((v - lo) / span * 255.0).round() as u8;
                [g, g, g]
            })
            .collect();
        Self {
            width: img.width,
            height: img.height,
            rgb,
        }
    }

    pub fn from_map(map: &ProbabilityMap) -> Self {
        let rgb = map
            .data
            .iter()
            .flat_map(|&v| {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g]
            })
            .collect();
        Self {
            width: map.width,
            height: map.height,
            rgb,
        }
    }

    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn line(&mut self, a: Point, b: Point, c: Rgb) {
        let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = a[0] + t * (b[0] - a[0]);
            let y = a[1] + t * (b[1] - a[1]);
            self.put(x.round() as i64, y.round() as i64, c);
        }
    }

    pub fn polygon(&mut self, pts: &[Point], c: Rgb) {
        for i in 0..pts.len() {
            self.line(pts[i], pts[(i + 1) % pts.len()], c);
        }
    }

    pub fn cross(&mut self, p: Point, half: i64, c: Rgb) {
        let (x, y) = (p[0].round() as i64, p[1].round() as i64);
        for d in -half..=half {
            self.put(x + d, y, c);
            self.put(x, y + d, c);
        }
    }

    pub fn dot(&mut self, p: Point, r: i64, c: Rgb) {
        let (x, y) = (p[0].round() as i64, p[1].round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(x + dx, y + dy, c);
                }
            }
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        write_rgb_png(self.width, self.height, &self.rgb)
    }
}
