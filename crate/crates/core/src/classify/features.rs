use serde::{Deserialize, Serialize};

use crate::squares::SquareCrop;

pub const N_FEATURES: usize = 7;

/// Column order used by every model and every features CSV.
pub const FEATURE_NAMES: [&str; N_FEATURES] =
    ["mean", "max", "min", "variance", "skew", "kurtosis", "area"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub variance: f64,
    /// Fisher skewness `m3 / m2^1.5`.
    pub skew: f64,
    /// Excess kurtosis `m4 / m2^2 - 3`.
    pub kurtosis: f64,
    pub area: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.mean,
            self.max,
            self.min,
            self.variance,
            self.skew,
            self.kurtosis,
            self.area,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        let a: [f64; N_FEATURES] = v.try_into().ok()?;
        Some(Self {
            mean: a[0],
            max: a[1],
            min: a[2],
            variance: a[3],
            skew: a[4],
            kurtosis: a[5],
            area: a[6],
        })
    }
}

/// Population moments of `pixels`; skew and kurtosis are 0 when the
/// variance is below 1e-12.
pub fn moment_features(pixels: &[f64], area: f64) -> FeatureVector {
    let n = pixels.len() as f64;
    let mean = pixels.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in pixels {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skew, kurtosis) = if m2 < 1e-12 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    FeatureVector {
        mean,
        max: hi,
        min: lo,
        variance: m2,
        skew,
        kurtosis,
        area,
    }
}

pub fn extract_features(crop: &SquareCrop) -> FeatureVector {
    moment_features(&crop.pixels.data, crop.source_rect.area())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::GrayImage;
    use crate::squares::RotatedRect;
    use approx::assert_abs_diff_eq;

    fn crop(w: usize, h: usize, data: Vec<f64>) -> SquareCrop {
        SquareCrop {
            pixels: GrayImage::new(w, h, data).unwrap(),
            source_rect: RotatedRect {
                center: [0.0, 0.0],
                width: w as f64,
                height: h as f64,
                theta: 0.0,
            },
            image_id: "t".into(),
            label: None,
        }
    }

    #[test]
    fn hand_moments() {
        let f = extract_features(&crop(2, 2, vec![1.0, 1.0, 3.0, 3.0]));
        assert_eq!(f.mean, 2.0);
        assert_eq!(f.max, 3.0);
        assert_eq!(f.min, 1.0);
        assert_eq!(f.variance, 1.0);
        assert_eq!(f.skew, 0.0);
        assert_abs_diff_eq!(f.kurtosis, -2.0, epsilon = 1e-12);
        assert_eq!(f.area, 4.0);
    }

    #[test]
    fn constant_crop_guard() {
        let f = extract_features(&crop(3, 2, vec![5.0; 6]));
        assert_eq!((f.variance, f.skew, f.kurtosis), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rotated_crop_has_same_features() {
        let c = crop(3, 2, vec![1.0, 4.0, 2.0, 8.0, 0.5, 3.0]);
        let mut r = c.clone();
        r.pixels = c.pixels.rot90();
        let (a, b) = (extract_features(&c), extract_features(&r));
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn skewed_sample() {
        // 0,0,0,4: mean 1, m2 3, m3 (1+1+1)(-1) + 27 = 24 / 4 = 6
        let f = moment_features(&[0.0, 0.0, 0.0, 4.0], 1.0);
        assert_abs_diff_eq!(f.skew, 6.0 / 3f64.powf(1.5), epsilon = 1e-12);
        // m4 = (3 + 81) / 4 = 21
        assert_abs_diff_eq!(f.kurtosis, 21.0 / 9.0 - 3.0, epsilon = 1e-12);
    }
}
