//! Square-lattice fitting on hole-center probability maps.
//!
//! Centroids of thresholded map regions propose anchor pairs `(a, b)`. Each
//! pair defines the lattice `a + i·u + j·v` with `u = b − a` and
//! `v = perp(u)`. The lattice is rasterized as disks and scored against the
//! map with
//!
//! ```text
//! cost = w_fp · Σ_{l=0} o  +  w_fn · Σ_{l=1} (1 − o)
//! ```
//!
//! The pair with the lowest cost wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmatch::{Region, RegionSource, Shape};
use crate::imgio::{GrayImage, PixelMask, ProbabilityMap};
use crate::segment::{connected_components, Connectivity};
use crate::squares::Point;

/// Pairs closer than this are not costed.
pub const MIN_SPACING: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub x: f64,
    pub y: f64,
    /// Summed probability of the region.
    pub mass: f64,
}

impl Centroid {
    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

/// Probability-weighted centroids of 4-connected regions with `o >= threshold`
/// and at least `min_region` pixels.
pub fn extract_centroids(map: &ProbabilityMap, threshold: f64, min_region: usize) -> Vec<Centroid> {
    let mask = PixelMask {
        width: map.width,
        height: map.height,
        bits: map.data.iter().map(|&o| o as f64 >= threshold).collect(),
    };
    connected_components(&mask, Connectivity::Four, min_region.max(1))
        .into_iter()
        .filter_map(|c| {
            let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for &(x, y) in &c.pixels {
                let o = map.get(x, y) as f64;
                m += o;
                sx += o * x as f64;
                sy += o * y as f64;
            }
            (m > 0.0).then(|| Centroid {
                x: sx / m,
                y: sy / m,
                mass: m,
            })
        })
        .collect()
}

/// Unordered index pairs `(i, j)`, `i < j`, linking each centroid to its `k`
/// nearest others. Neighbors tied with the k-th distance (relative 1e-9) are
/// included too, so the pair set does not depend on centroid order.
pub fn candidate_anchor_pairs(cents: &[Centroid], k: usize) -> Result<Vec<(usize, usize)>> {
    if cents.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 centroids for anchor pairs, found {}",
            cents.len()
        )));
    }
    if k == 0 {
        return Err(Error::arg("K must be at least 1"));
    }
    let mut pairs = Vec::new();
    for (i, c) in cents.iter().enumerate() {
        let mut d: Vec<(f64, usize)> = cents
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, o)| ((o.x - c.x).hypot(o.y - c.y), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let kth = d[k.min(d.len()) - 1].0;
        for &(dist, j) in &d {
            if dist > kth * (1.0 + 1e-9) {
                break;
            }
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

/// The square lattice generated by two anchors, restricted to an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub anchor_a: Point,
    pub anchor_b: Point,
    pub spacing: f64,
    pub u: Point,
    pub v: Point,
    /// Every lattice point with `0 <= x <= w-1` and `0 <= y <= h-1`.
    pub points: Vec<Point>,
}

impl Lattice {
    pub fn from_anchors(a: Point, b: Point, width: usize, height: usize) -> Result<Self> {
        let u = [b[0] - a[0], b[1] - a[1]];
        let spacing = u[0].hypot(u[1]);
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::arg("lattice anchors coincide"));
        }
        let v = [-u[1], u[0]];
        let (maxx, maxy) = ((width as f64) - 1.0, (height as f64) - 1.0);
        // Lattice coordinates of the image corners, widened by half a cell.
        let d2 = spacing * spacing;
        let corners = [[0.0, 0.0], [maxx, 0.0], [0.0, maxy], [maxx, maxy]];
        let (mut ilo, mut ihi, mut jlo, mut jhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for c in corners {
            let (dx, dy) = (c[0] - a[0], c[1] - a[1]);
            let i = (dx * u[0] + dy * u[1]) / d2;
            let j = (dx * v[0] + dy * v[1]) / d2;
            ilo = ilo.min(i);
            ihi = ihi.max(i);
            jlo = jlo.min(j);
            jhi = jhi.max(j);
        }
        let mut points = Vec::new();
        for i in (ilo - 0.5).floor() as i64..=(ihi + 0.5).ceil() as i64 {
            for j in (jlo - 0.5).floor() as i64..=(jhi + 0.5).ceil() as i64 {
                let (fi, fj) = (i as f64, j as f64);
                let p = [a[0] + fi * u[0] + fj * v[0], a[1] + fi * u[1] + fj * v[1]];
                if p[0] >= 0.0 && p[0] <= maxx && p[1] >= 0.0 && p[1] <= maxy {
                    points.push(p);
                }
            }
        }
        Ok(Self {
            anchor_a: a,
            anchor_b: b,
            spacing,
            u,
            v,
            points,
        })
    }
}

/// Pixels of the closed disk around `p`, plus the pixel nearest to `p`.
fn for_each_stamp_pixel(p: Point, radius: f64, w: usize, h: usize, mut f: impl FnMut(usize)) {
    let r2 = radius * radius;
    let nx = p[0].round() as usize;
    let ny = p[1].round() as usize;
    let mut nearest_seen = false;
    let y0 = (p[1] - radius).ceil().max(0.0) as usize;
    let y1 = (p[1] + radius).floor().min(h as f64 - 1.0);
    let x0 = (p[0] - radius).ceil().max(0.0) as usize;
    let x1 = (p[0] + radius).floor().min(w as f64 - 1.0);
    if y1 >= 0.0 && x1 >= 0.0 {
        for y in y0..=y1 as usize {
            let dy = y as f64 - p[1];
            for x in x0..=x1 as usize {
                let dx = x as f64 - p[0];
                if dx * dx + dy * dy <= r2 {
                    nearest_seen |= x == nx && y == ny;
                    f(y * w + x);
                }
            }
        }
    }
    if !nearest_seen {
        f(ny * w + nx);
    }
}

/// Binary raster of `l`: a closed disk of `radius` around every point.
pub fn render_lattice(l: &Lattice, width: usize, height: usize, radius: f64) -> Result<PixelMask> {
    if l.spacing.is_nan() || l.spacing <= 0.0 {
        return Err(Error::arg("lattice has zero spacing"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::arg(format!(
            "render radius must be >= 0, got {radius}"
        )));
    }
    let mut mask = PixelMask::new(width, height);
    for &p in &l.points {
        for_each_stamp_pixel(p, radius, width, height, |i| mask.bits[i] = true);
    }
    Ok(mask)
}

/// Default render radius for spacing `d`: `max(3, round(d / 8))`.
pub fn default_radius(spacing: f64) -> f64 {
    (spacing / 8.0).round().max(3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Weight on probability outside the lattice.
    pub w_fp: f64,
    /// Weight on lattice pixels with low probability.
    pub w_fn: f64,
}

impl CostWeights {
    pub fn new(w_fp: f64, w_fn: f64) -> Result<Self> {
        if !(w_fp >= 0.0 && w_fn >= 0.0 && w_fp.is_finite() && w_fn.is_finite())
            || w_fp + w_fn == 0.0
        {
            return Err(Error::arg(format!(
                "cost weights must be >= 0 and not both zero, got ({w_fp}, {w_fn})"
            )));
        }
        Ok(Self { w_fp, w_fn })
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_fp: 1.0,
            w_fn: 2.0,
        }
    }
}

/// `Σ w_fp (o − l)(1 − l) + w_fn (l − o) l` over all pixels.
pub fn lattice_cost(o: &ProbabilityMap, l: &PixelMask, w: CostWeights) -> Result<f64> {
    if (o.width, o.height) != (l.width, l.height) {
        return Err(Error::arg(format!(
            "map is {}x{} but lattice raster is {}x{}",
            o.width, o.height, l.width, l.height
        )));
    }
    Ok(o.data
        .iter()
        .zip(&l.bits)
        .map(|(&oi, &li)| {
            let (oi, li) = (oi as f64, if li { 1.0 } else { 0.0 });
            w.w_fp * (oi - li) * (1.0 - li) + w.w_fn * (li - oi) * li
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Centroid threshold on the map.
    pub threshold: f64,
    pub min_region: usize,
    /// Nearest neighbors paired with each centroid.
    pub k: usize,
    pub weights: CostWeights,
    /// Disk radius; `None` uses [`default_radius`] of each candidate.
    pub radius: Option<f64>,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            min_region: 4,
            k: 6,
            weights: CostWeights::default(),
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeFit {
    pub lattice: Lattice,
    pub cost: f64,
    pub radius: f64,
    pub centroids: Vec<Centroid>,
    /// Anchor pairs that passed the spacing filter and were costed.
    pub candidates: usize,
}

/// Scores one anchor pair; reusable scratch marks pixels already counted.
pub struct PairScorer<'a> {
    map: &'a ProbabilityMap,
    total: f64,
    weights: CostWeights,
    radius: Option<f64>,
}

/// Per-thread deduplication buffer for overlapping stamps.
pub struct Scratch {
    stamp: Vec<u32>,
    generation: u32,
}

impl Scratch {
    pub fn new(len: usize) -> Self {
        Self {
            stamp: vec![0; len],
            generation: 0,
        }
    }
}

impl<'a> PairScorer<'a> {
    pub fn new(map: &'a ProbabilityMap, weights: CostWeights, radius: Option<f64>) -> Self {
        Self {
            map,
            total: map.data.iter().map(|&o| o as f64).sum(),
            weights,
            radius,
        }
    }

    /// `(cost, lattice, radius)` for the pair, with the same value as
    /// [`lattice_cost`] on the rendered lattice up to summation order.
    pub fn score(&self, a: Point, b: Point, scratch: &mut Scratch) -> Result<(f64, Lattice, f64)> {
        let (w, h) = (self.map.width, self.map.height);
        let l = Lattice::from_anchors(a, b, w, h)?;
        let radius = self.radius.unwrap_or_else(|| default_radius(l.spacing));
        scratch.generation = scratch.generation.wrapping_add(1);
        if scratch.generation == 0 {
            scratch.stamp.iter_mut().for_each(|s| *s = 0);
            scratch.generation = 1;
        }
        let g = scratch.generation;
        let (mut inside, mut count) = (0.0, 0usize);
        for &p in &l.points {
            for_each_stamp_pixel(p, radius, w, h, |i| {
                if scratch.stamp[i] != g {
                    scratch.stamp[i] = g;
                    inside += self.map.data[i] as f64;
                    count += 1;
                }
            });
        }
        let cost =
            self.weights.w_fp * (self.total - inside) + self.weights.w_fn * (count as f64 - inside);
        Ok((cost, l, radius))
    }
}

fn lex(a: Point, b: Point) -> [f64; 4] {
    [a[0], a[1], b[0], b[1]]
}

/// Orders anchors so that `a` is lexicographically smaller in `(x, y)`.
fn canonical(p: Point, q: Point) -> (Point, Point) {
    if (p[0], p[1]) <= (q[0], q[1]) {
        (p, q)
    } else {
        (q, p)
    }
}

/// Is candidate `x` better than `y`: lower cost, then smaller spacing, then
/// lexicographically smaller anchors.
fn better(x: &(f64, Lattice, f64), y: &(f64, Lattice, f64)) -> bool {
    x.0.total_cmp(&y.0)
        .then(x.1.spacing.total_cmp(&y.1.spacing))
        .then_with(|| {
            let (lx, ly) = (
                lex(x.1.anchor_a, x.1.anchor_b),
                lex(y.1.anchor_a, y.1.anchor_b),
            );
            lx.iter()
                .zip(&ly)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .is_lt()
}

/// Minimum-cost lattice over the centroid anchor pairs of `map`.
pub fn fit_lattice(map: &ProbabilityMap, params: &LatticeParams) -> Result<LatticeFit> {
    let cents = extract_centroids(map, params.threshold, params.min_region);
    let pairs = candidate_anchor_pairs(&cents, params.k)?;
    fit_lattice_pairs(map, &cents, &pairs, params)
}

/// Costs the given centroid index pairs and keeps the best. Pairs closer
/// than [`MIN_SPACING`] are skipped.
pub fn fit_lattice_pairs(
    map: &ProbabilityMap,
    cents: &[Centroid],
    pairs: &[(usize, usize)],
    params: &LatticeParams,
) -> Result<LatticeFit> {
    let scorer = PairScorer::new(map, params.weights, params.radius);
    let usable: Vec<(Point, Point)> = pairs
        .iter()
        .map(|&(i, j)| canonical(cents[i].point(), cents[j].point()))
        .filter(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]) >= MIN_SPACING)
        .collect();
    let n = map.data.len();
    let best = usable
        .par_iter()
        .map_init(
            || Scratch::new(n),
            |scratch, &(a, b)| scorer.score(a, b, scratch),
        )
        .try_fold(
            || None,
            |acc: Option<(f64, Lattice, f64)>, r| {
                let cand = r?;
                Ok::<_, Error>(match acc {
                    Some(cur) if !better(&cand, &cur) => Some(cur),
                    _ => Some(cand),
                })
            },
        )
        .try_reduce(
            || None,
            |x, y| {
                Ok(match (x, y) {
                    (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
                    (x, None) => x,
                    (None, y) => y,
                })
            },
        )?;
    let Some((cost, lattice, radius)) = best else {
        return Err(Error::Fit(format!(
            "no anchor pair with spacing >= {MIN_SPACING} among {} centroids",
            cents.len()
        )));
    };
    Ok(LatticeFit {
        lattice,
        cost,
        radius,
        centroids: cents.to_vec(),
        candidates: usable.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleCrop {
    pub center: Point,
    /// `spacing − margin`.
    pub side: f64,
    /// Top-left pixel of the crop.
    pub origin: (usize, usize),
    pub prob_sum: f64,
    pub pixels: GrayImage,
    pub label: Option<bool>,
}

impl HoleCrop {
    pub fn region(&self) -> Region {
        Region {
            shape: Shape::Square {
                center: self.center,
                side: self.side,
            },
            source: RegionSource::LatticeCrop,
        }
    }
}

/// Axis-aligned square crops of side `spacing − margin` around every lattice
/// point whose crop fits in the image. With `prob_threshold`, only crops
/// with `prob_sum > threshold` are kept.
pub fn lattice_crops(
    l: &Lattice,
    img: &GrayImage,
    o: &ProbabilityMap,
    margin: f64,
    prob_threshold: Option<f64>,
) -> Result<Vec<HoleCrop>> {
    if (img.width, img.height) != (o.width, o.height) {
        return Err(Error::arg("image and probability map differ in shape"));
    }
    let side = l.spacing - margin;
    if side.is_nan() || side <= 0.0 {
        return Err(Error::Geometry(format!(
            "crop margin {margin} leaves no crop at spacing {:.3}",
            l.spacing
        )));
    }
    let s = (side.round() as usize).max(1);
    let half = (s as f64 - 1.0) / 2.0;
    let mut out = Vec::new();
    for &p in &l.points {
        let x0 = (p[0] - half).round();
        let y0 = (p[1] - half).round();
        if x0 < 0.0 || y0 < 0.0 || x0 as usize + s > img.width || y0 as usize + s > img.height {
            continue;
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        let mut prob_sum = 0.0;
        let mut data = Vec::with_capacity(s * s);
        for y in y0..y0 + s {
            for x in x0..x0 + s {
                prob_sum += o.get(x, y) as f64;
                data.push(img.get(x, y));
            }
        }
        if prob_threshold.is_some_and(|t| prob_sum <= t) {
            continue;
        }
        out.push(HoleCrop {
            center: p,
            side,
            origin: (x0, y0),
            prob_sum,
            pixels: GrayImage::new(s, s, data)?.with_id(img.id.clone()),
            label: None,
        });
    }
    Ok(out)
}

/// Closed circles of `radius` around each centroid.
pub fn centroid_regions(cents: &[Centroid], radius: f64) -> Result<Vec<Region>> {
    cents
        .iter()
        .map(|c| {
            Region::new(
                Shape::Circle {
                    center: c.point(),
                    radius,
                },
                RegionSource::CentroidCircle,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn blob_map(w: usize, h: usize, centers: &[Point], sigma: f64) -> ProbabilityMap {
        ProbabilityMap::from_fn(w, h, |x, y| {
            centers
                .iter()
                .map(|c| {
                    let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .fold(0.0, f64::max)
        })
    }

    #[test]
    fn centroid_of_block() {
        let map = ProbabilityMap::from_fn(12, 12, |x, y| {
            if (4..=6).contains(&x) && (4..=6).contains(&y) {
                0.9
            } else {
                0.0
            }
        });
        let c = extract_centroids(&map, 0.5, 4);
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0].x, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[0].y, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[0].mass, 8.1, epsilon = 1e-5);
        assert!(extract_centroids(&ProbabilityMap::zeros(8, 8), 0.5, 4).is_empty());
    }

    #[test]
    fn sub_threshold_bridge_keeps_blobs_apart() {
        let map = ProbabilityMap::from_fn(20, 7, |x, y| match (x, y) {
            (1..=5, 1..=5) | (14..=18, 1..=5) => 0.9,
            (6..=13, 3) => 0.3,
            _ => 0.0,
        });
        assert_eq!(extract_centroids(&map, 0.5, 4).len(), 2);
    }

    fn cents(pts: &[Point]) -> Vec<Centroid> {
        pts.iter()
            .map(|p| Centroid {
                x: p[0],
                y: p[1],
                mass: 1.0,
            })
            .collect()
    }

    #[test]
    fn three_centroids_three_pairs() {
        let c = cents(&[[0.0, 0.0], [10.0, 0.0], [3.0, 7.0]]);
        assert_eq!(
            candidate_anchor_pairs(&c, 6).unwrap(),
            vec![(0, 1), (0, 2), (1, 2)]
        );
        assert!(matches!(
            candidate_anchor_pairs(&c[..1], 6),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn collinear_pairs() {
        for n in 2..=20usize {
            let c = cents(&(0..n).map(|i| [i as f64 * 10.0, 5.0]).collect::<Vec<_>>());
            let pairs = candidate_anchor_pairs(&c, 6).unwrap();
            // every centroid sits in at least min(K, n-1) pairs, at most K of them its own
            let k = 6.min(n - 1);
            assert!(
                pairs.len() >= n * k / 2 && pairs.len() <= n * k,
                "n {n}: {}",
                pairs.len()
            );
            if n <= 7 {
                assert_eq!(pairs.len(), n * (n - 1) / 2);
            }
            for i in 0..n - 1 {
                assert!(pairs.contains(&(i, i + 1)));
            }
        }
    }

    #[test]
    fn duplicate_centroids_pair_once_and_are_skipped() {
        let c = cents(&[[5.0, 5.0], [5.0, 5.0]]);
        assert_eq!(candidate_anchor_pairs(&c, 6).unwrap(), vec![(0, 1)]);
        let map = ProbabilityMap::zeros(16, 16);
        let r = fit_lattice_pairs(&map, &c, &[(0, 1)], &LatticeParams::default());
        assert!(matches!(r, Err(Error::Fit(_))));
    }

    #[test]
    fn sixteen_point_example() {
        let l = Lattice::from_anchors([10.0, 10.0], [20.0, 10.0], 40, 40).unwrap();
        let mut got: Vec<(i64, i64)> = l
            .points
            .iter()
            .map(|p| (p[0].round() as i64, p[1].round() as i64))
            .collect();
        got.sort();
        let want: Vec<(i64, i64)> = [0, 10, 20, 30]
            .iter()
            .flat_map(|&x| [0, 10, 20, 30].map(|y| (x, y)))
            .collect();
        assert_eq!(got, want);
        let m = render_lattice(&l, 40, 40, 0.0).unwrap();
        assert_eq!(m.count(), 16);
        assert!(Lattice::from_anchors([1.0, 1.0], [1.0, 1.0], 8, 8).is_err());
    }

    #[test]
    fn rendering_shifts_with_anchors() {
        let a = Lattice::from_anchors([10.3, 12.0], [22.0, 15.1], 80, 80).unwrap();
        let b = Lattice::from_anchors([15.3, 17.0], [27.0, 20.1], 80, 80).unwrap();
        let ma = render_lattice(&a, 80, 80, 3.0).unwrap();
        let mb = render_lattice(&b, 80, 80, 3.0).unwrap();
        for y in 10..65 {
            for x in 10..65 {
                assert_eq!(ma.get(x, y), mb.get(x + 5, y + 5), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn cost_examples() {
        let w = CostWeights::new(1.5, 2.5).unwrap();
        let l = Lattice::from_anchors([4.0, 4.0], [12.0, 4.0], 24, 24).unwrap();
        let mask = render_lattice(&l, 24, 24, 2.0).unwrap();
        let exact = ProbabilityMap::from_fn(24, 24, |x, y| if mask.get(x, y) { 1.0 } else { 0.0 });
        assert_eq!(lattice_cost(&exact, &mask, w).unwrap(), 0.0);
        let zero = ProbabilityMap::zeros(24, 24);
        assert_eq!(
            lattice_cost(&zero, &mask, w).unwrap(),
            2.5 * mask.count() as f64
        );
        let empty = PixelMask::new(24, 24);
        assert_eq!(
            lattice_cost(&exact, &empty, w).unwrap(),
            1.5 * mask.count() as f64
        );
        assert!(lattice_cost(&zero, &PixelMask::new(23, 24), w).is_err());
        assert!(CostWeights::new(0.0, 0.0).is_err());
        assert!(CostWeights::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn fast_cost_agrees_with_raster_cost() {
        let map = blob_map(90, 70, &[[20.0, 20.0], [45.5, 21.0], [30.0, 50.2]], 2.5);
        let w = CostWeights::new(1.3, 0.7).unwrap();
        let scorer = PairScorer::new(&map, w, Some(6.0));
        let mut scratch = Scratch::new(map.data.len());
        for (a, b) in [
            ([20.0, 20.0], [45.5, 21.0]),
            ([3.0, 4.0], [7.0, 5.0]),
            ([30.0, 50.2], [20.0, 20.0]),
        ] {
            let (fast, l, r) = scorer.score(a, b, &mut scratch).unwrap();
            let slow = lattice_cost(&map, &render_lattice(&l, 90, 70, r).unwrap(), w).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-9 * slow.abs().max(1.0),
                "{fast} vs {slow}"
            );
        }
    }

    #[test]
    fn grid_with_deletions_and_spurious_blobs() {
        // 5x5 planted grid, spacing 32, 5 deleted, 5 spurious blobs.
        let planted: Vec<Point> = (0..5)
            .flat_map(|i| (0..5).map(move |j| [20.0 + 32.0 * i as f64, 20.0 + 32.0 * j as f64]))
            .collect();
        let deleted = [3, 7, 12, 18, 21];
        let mut centers: Vec<Point> = planted
            .iter()
            .enumerate()
            .filter(|(i, _)| !deleted.contains(i))
            .map(|(_, p)| *p)
            .collect();
        centers.extend([
            [36.0, 70.0],
            [100.0, 37.0],
            [133.0, 150.0],
            [70.0, 118.0],
            [150.0, 100.0],
        ]);
        let map = blob_map(176, 176, &centers, 8.0 / 3.0);
        let fit = fit_lattice(&map, &LatticeParams::default()).unwrap();
        assert!(
            (fit.lattice.spacing - 32.0).abs() / 32.0 < 0.02,
            "spacing {}",
            fit.lattice.spacing
        );
        for p in &fit.lattice.points {
            let near = planted
                .iter()
                .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::MAX, f64::min);
            // lattice points outside the planted 5x5 block are extension points
            let inside_block = (18.0..=150.0).contains(&p[0]) && (18.0..=150.0).contains(&p[1]);
            if inside_block {
                assert!(near <= 2.0, "point {p:?} is {near} px from a hole");
            }
        }
    }

    #[test]
    fn two_centroids_only() {
        let map = blob_map(64, 64, &[[20.0, 30.0], [42.0, 30.0]], 2.0);
        let fit = fit_lattice(&map, &LatticeParams::default()).unwrap();
        assert_abs_diff_eq!(fit.lattice.spacing, 22.0, epsilon = 1e-6);
    }

    #[test]
    fn crop_side_from_margin() {
        let l = Lattice::from_anchors([100.0, 100.0], [200.0, 100.0], 400, 400).unwrap();
        let img = GrayImage::from_fn(400, 400, |x, y| (x + y) as f64);
        let o = ProbabilityMap::zeros(400, 400);
        let crops = lattice_crops(&l, &img, &o, 60.0, None).unwrap();
        assert!(crops.iter().all(|c| c.side == 40.0 && c.pixels.width == 40));
        assert_eq!(crops.len(), 9);
        assert!(lattice_crops(&l, &img, &o, 60.0, Some(0.5))
            .unwrap()
            .is_empty());
        assert!(matches!(
            lattice_crops(&l, &img, &o, 100.0, None),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn circles_around_centroids() {
        let c = cents(&[[60.0, 60.0]]);
        let r = centroid_regions(&c, 50.0).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].shape.extent(), 50.0);
        assert!(r[0].contains([109.9, 60.0]));
        assert!(!r[0].contains([110.1, 60.0]));
        assert!(centroid_regions(&[], 50.0).unwrap().is_empty());
    }
}
