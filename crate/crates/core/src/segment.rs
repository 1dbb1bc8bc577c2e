//! Two-class pixel segmentation of low-magnification grid images.
//!
//! Pixel intensities are modelled as a two-component Poisson mixture: dark
//! grid-bar background and brighter squares. EM runs on the distinct
//! intensity values weighted by their counts, which keeps a 1024² image with
//! integer counts to a few hundred distinct values per iteration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{GrayImage, PixelMask};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 100;
/// Rates closer than this fraction of the overall mean count as collapsed.
pub const COLLAPSE_FRACTION: f64 = 0.05;
const RATE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonMixture {
    pub weight_bg: f64,
    pub weight_fg: f64,
    pub rate_bg: f64,
    pub rate_fg: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after every EM iteration (first entry is the
    /// initialization).
    pub trace: Vec<f64>,
}

impl PoissonMixture {
    /// Overall mean intensity implied by the mixture.
    pub fn mean(&self) -> f64 {
        self.weight_bg * self.rate_bg + self.weight_fg * self.rate_fg
    }

    /// The two classes are not separable: either the rates are within
    /// [`COLLAPSE_FRACTION`] of the mean, or they differ by less than one
    /// Poisson standard deviation at the mean (an overdispersed unimodal
    /// sample splits into two nearly identical components that never merge).
    pub fn is_degenerate(&self) -> bool {
        let mean = self.mean();
        let gap = (self.rate_fg - self.rate_bg).abs();
        gap < COLLAPSE_FRACTION * mean
            || gap < mean.sqrt()
            || self.weight_bg <= 0.0
            || self.weight_fg <= 0.0
    }

    /// Intensity at which the weighted class log-densities are equal.
    pub fn decision_boundary(&self) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::Degenerate(format!(
                "mixture collapsed: rates {:.4} and {:.4}",
                self.rate_bg, self.rate_fg
            )));
        }
        Ok(
            (self.rate_fg - self.rate_bg + (self.weight_bg / self.weight_fg).ln())
                / (self.rate_fg / self.rate_bg).ln(),
        )
    }

    /// Posterior probability of the foreground class for intensity `x`.
    pub fn responsibility_fg(&self, x: f64) -> f64 {
        let lb = self.weight_bg.ln() + log_density(x, self.rate_bg);
        let lf = self.weight_fg.ln() + log_density(x, self.rate_fg);
        let m = lb.max(lf);
        let (eb, ef) = ((lb - m).exp(), (lf - m).exp());
        ef / (eb + ef)
    }
}

/// Poisson log-density without the `ln x!` term.
#[inline]
fn log_density(x: f64, rate: f64) -> f64 {
    x * rate.ln() - rate
}

fn distinct_counts(img: &GrayImage) -> Result<Vec<(f64, f64)>> {
    if let Some(i) = img.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::arg(format!("non-finite intensity at index {i}")));
    }
    let mut sorted = img.data.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == v => *c += 1.0,
            _ => out.push((v, 1.0)),
        }
    }
    Ok(out)
}

fn percentile(values: &[(f64, f64)], total: f64, q: f64) -> f64 {
    let target = q * (total - 1.0);
    let mut seen = 0.0;
    for &(v, c) in values {
        seen += c;
        if seen > target {
            return v;
        }
    }
    values.last().map(|v| v.0).unwrap_or(0.0)
}

fn log_likelihood(values: &[(f64, f64)], w: [f64; 2], r: [f64; 2]) -> f64 {
    let (lw0, lw1) = (w[0].ln(), w[1].ln());
    let (lr0, lr1) = (r[0].ln(), r[1].ln());
    values
        .iter()
        .map(|&(x, c)| {
            let a = lw0 + x * lr0 - r[0];
            let b = lw1 + x * lr1 - r[1];
            let m = a.max(b);
            c * (m + ((a - m).exp() + (b - m).exp()).ln())
        })
        .sum()
}

/// Fits the two-component mixture by EM.
///
/// Initialization uses the 25th and 75th intensity percentiles with equal
/// weights; iteration stops when the relative log-likelihood change drops
/// below `tol` or after `max_iters` iterations.
pub fn fit_poisson_mixture(img: &GrayImage, tol: f64, max_iters: usize) -> Result<PoissonMixture> {
    let values = distinct_counts(img)?;
    if values.len() < 2 {
        return Err(Error::Degenerate(
            "all pixels have the same intensity".into(),
        ));
    }
    let total: f64 = values.iter().map(|v| v.1).sum();
    let mut r = [
        percentile(&values, total, 0.25),
        percentile(&values, total, 0.75),
    ];
    if r[0] >= r[1] {
        r = [values[0].0, values[values.len() - 1].0];
    }
    r[0] = r[0].max(RATE_FLOOR);
    r[1] = r[1].max(2.0 * RATE_FLOOR);
    let mut w = [0.5, 0.5];
    let mut ll = log_likelihood(&values, w, r);
    let mut trace = vec![ll];
    let mut iterations = 0;

    while iterations < max_iters {
        // E-step and M-step accumulators in one sweep.
        let (lw0, lw1) = (w[0].ln(), w[1].ln());
        let (lr0, lr1) = (r[0].ln(), r[1].ln());
        let (mut n1, mut s0, mut s1) = (0.0, 0.0, 0.0);
        for &(x, c) in &values {
            let a = lw0 + x * lr0 - r[0];
            let b = lw1 + x * lr1 - r[1];
            let g1 = 1.0 / (1.0 + (a - b).exp());
            let g0 = 1.0 - g1;
            debug_assert!((g0 + g1 - 1.0).abs() <= 1e-12);
            n1 += c * g1;
            s0 += c * g0 * x;
            s1 += c * g1 * x;
        }
        let n0 = total - n1;
        if n0 <= 0.0 || n1 <= 0.0 {
            break;
        }
        w = [n0 / total, n1 / total];
        r = [(s0 / n0).max(RATE_FLOOR), (s1 / n1).max(RATE_FLOOR)];
        iterations += 1;

        let next = log_likelihood(&values, w, r);
        debug_assert!(
            next >= ll - 1e-9 * ll.abs().max(1.0),
            "EM log-likelihood decreased: {ll} -> {next}"
        );
        trace.push(next);
        let rel = (next - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if rel < tol {
            break;
        }
    }

    if r[0] > r[1] {
        r.swap(0, 1);
        w.swap(0, 1);
    }
    Ok(PoissonMixture {
        weight_bg: w[0],
        weight_fg: w[1],
        rate_bg: r[0],
        rate_fg: r[1],
        log_likelihood: ll,
        iterations,
        trace,
    })
}

/// Foreground iff intensity `>=` the mixture's decision boundary.
pub fn classify_pixels(img: &GrayImage, m: &PoissonMixture) -> Result<PixelMask> {
    let boundary = m.decision_boundary()?;
    Ok(PixelMask {
        width: img.width,
        height: img.height,
        bits: img.data.iter().map(|&x| x >= boundary).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::arg(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }

    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// A connected set of foreground pixels, as `(x, y)` coordinates in
/// flood-fill order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelComponent {
    pub pixels: Vec<(usize, usize)>,
}

impl PixelComponent {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }
}

/// Default minimum component size: 0.05% of the image, at least one pixel.
pub fn default_min_component_size(width: usize, height: usize) -> usize {
    ((width * height) as f64 * 0.0005).ceil().max(1.0) as usize
}

/// Flood-fill labelling. Components smaller than `min_size` are dropped;
/// the rest come out ordered by their first pixel in raster order, i.e. by
/// `(min y, min x of that row)`.
pub fn connected_components(
    mask: &PixelMask,
    connectivity: Connectivity,
    min_size: usize,
) -> Vec<PixelComponent> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if pixels.len() >= min_size {
            out.push(PixelComponent { pixels });
        }
    }
    out
}
