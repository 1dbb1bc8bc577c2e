//! Square localization on low-magnification images.
//!
//! Foreground components are wrapped in convex polygons; a single grid angle
//! is chosen so that the rectangles aligned to it, one per polygon, have the
//! smallest total area. Those rectangles are then resampled into crops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::GrayImage;
use crate::optimize::brent_bounded;
use crate::segment::{
    classify_pixels, connected_components, default_min_component_size, fit_poisson_mixture,
    Connectivity, PixelComponent, PoissonMixture,
};

pub type Point = [f64; 2];

/// Strictly convex polygon, vertices counter-clockwise in a y-up frame
/// (positive signed area).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
            * 0.5
    }

    /// Closed containment with absolute tolerance `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = ex.hypot(ey);
            cross(a, b, p) / len >= -tol
        })
    }
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedRect {
    pub center: Point,
    /// Extent along `(cos θ, sin θ)`.
    pub width: f64,
    /// Extent along `(-sin θ, cos θ)`.
    pub height: f64,
    /// Degrees, in `[0, 90)` for rectangles produced by this module.
    pub theta: f64,
}

impl RotatedRect {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    fn axes(&self) -> (Point, Point) {
        let (s, c) = self.theta.to_radians().sin_cos();
        ([c, s], [-s, c])
    }

    pub fn corners(&self) -> [Point; 4] {
        let (e1, e2) = self.axes();
        let (hw, hh) = (0.5 * self.width, 0.5 * self.height);
        let at = |a: f64, b: f64| {
            [
                self.center[0] + a * e1[0] + b * e2[0],
                self.center[1] + a * e1[1] + b * e2[1],
            ]
        };
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (e1, e2) = self.axes();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let u = dx * e1[0] + dy * e1[1];
        let v = dx * e2[0] + dy * e2[1];
        u.abs() <= 0.5 * self.width + tol && v.abs() <= 0.5 * self.height + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSolution {
    pub theta: f64,
    pub total_area: f64,
    pub rects: Vec<RotatedRect>,
}

/// A resampled rectangle of a low-mag image.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareCrop {
    pub pixels: GrayImage,
    pub source_rect: RotatedRect,
    pub image_id: String,
    /// Operator-selected flag, when known.
    pub label: Option<bool>,
}

/// Monotone-chain hull of pixel centers.
///
/// Collinear components (including single pixels) are widened by half a
/// pixel on each side of their line so the result is always a proper polygon.
pub fn convex_hull(c: &PixelComponent) -> Result<ConvexPolygon> {
    if c.pixels.is_empty() {
        return Err(Error::arg("cannot take the hull of an empty component"));
    }
    let mut pts: Vec<Point> = c
        .pixels
        .iter()
        .map(|&(x, y)| [x as f64, y as f64])
        .collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    Ok(hull_of_points(&pts))
}

/// Hull of points already sorted lexicographically and deduplicated.
fn hull_of_points(pts: &[Point]) -> ConvexPolygon {
    if pts.len() >= 3 {
        let mut lower: Vec<Point> = Vec::new();
        for &p in pts {
            while lower.len() >= 2
                && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0
            {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Point> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2
                && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0
            {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        if lower.len() >= 3 {
            return ConvexPolygon { vertices: lower };
        }
    }
    widen_degenerate(pts[0], pts[pts.len() - 1])
}

fn widen_degenerate(p: Point, q: Point) -> ConvexPolygon {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        // single point: unit square around it
        let vertices = vec![
            [p[0] - 0.5, p[1] - 0.5],
            [p[0] + 0.5, p[1] - 0.5],
            [p[0] + 0.5, p[1] + 0.5],
            [p[0] - 0.5, p[1] + 0.5],
        ];
        return ConvexPolygon { vertices };
    }
    let n = [-dy / len, dx / len];
    let off = |a: Point, s: f64| [a[0] + s * 0.5 * n[0], a[1] + s * 0.5 * n[1]];
    let mut poly = ConvexPolygon {
        vertices: vec![off(p, -1.0), off(q, -1.0), off(q, 1.0), off(p, 1.0)],
    };
    if poly.signed_area() < 0.0 {
        poly.vertices.reverse();
    }
    poly
}

/// Smallest rectangle aligned at `theta` degrees enclosing the polygon.
///
/// The returned rectangle reports its angle reduced to `[0, 90)`, swapping
/// width and height when that reduction is an odd number of quarter turns.
pub fn min_rect_at_angle(p: &ConvexPolygon, theta: f64) -> RotatedRect {
    let (s, c) = theta.to_radians().sin_cos();
    let (mut umin, mut umax, mut vmin, mut vmax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &[x, y] in &p.vertices {
        let u = x * c + y * s;
        let v = -x * s + y * c;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (uc, vc) = (0.5 * (umin + umax), 0.5 * (vmin + vmax));
    let center = [uc * c - vc * s, uc * s + vc * c];
    let (mut width, mut height) = (umax - umin, vmax - vmin);

    let turns = (theta / 90.0).floor();
    let mut reduced = theta - 90.0 * turns;
    let mut odd = (turns as i64).rem_euclid(2) == 1;
    if reduced >= 90.0 {
        reduced -= 90.0;
        odd = !odd;
    }
    if odd {
        std::mem::swap(&mut width, &mut height);
    }
    RotatedRect {
        center,
        width,
        height,
        theta: reduced,
    }
}

/// Sum of aligned bounding-rectangle areas at `theta`.
pub fn total_area_at(polys: &[ConvexPolygon], theta: f64) -> f64 {
    polys
        .iter()
        .map(|p| min_rect_at_angle(p, theta).area())
        .sum()
}

/// Coarse 1° scan over `[0, 90)` followed by Brent refinement within ±1° of
/// the best sample. Never returns a worse angle than the best sample.
pub fn optimize_grid_angle(polys: &[ConvexPolygon]) -> Result<AngleSolution> {
    if polys.is_empty() {
        return Err(Error::arg("no polygons to align"));
    }
    let objective = |t: f64| total_area_at(polys, t);
    let (mut best_theta, mut best_area) = (0.0, f64::INFINITY);
    for deg in 0..90 {
        let a = objective(deg as f64);
        if a < best_area {
            best_theta = deg as f64;
            best_area = a;
        }
    }
    let refined = brent_bounded(objective, best_theta - 1.0, best_theta + 1.0, 1e-5, 200);
    if refined.fx < best_area {
        best_theta = refined.x;
    }
    let theta = best_theta.rem_euclid(90.0);
    let theta = if theta >= 90.0 { 0.0 } else { theta };
    let rects: Vec<RotatedRect> = polys.iter().map(|p| min_rect_at_angle(p, theta)).collect();
    let total_area = rects.iter().map(RotatedRect::area).sum();
    Ok(AngleSolution {
        theta,
        total_area,
        rects,
    })
}

/// Resamples the rectangle with bilinear interpolation into a
/// `round(width) x round(height)` crop. Samples falling outside the image
/// take the image mean.
pub fn crop_square(img: &GrayImage, r: &RotatedRect) -> Result<SquareCrop> {
    let (cw, ch) = (r.width.round(), r.height.round());
    if !(cw >= 1.0 && ch >= 1.0) {
        return Err(Error::arg(format!(
            "rect {}x{} has zero crop area",
            r.width, r.height
        )));
    }
    let overlaps = r.corners().iter().any(|c| {
        c[0] >= -0.5
            && c[1] >= -0.5
            && c[0] <= img.width as f64 - 0.5
            && c[1] <= img.height as f64 - 0.5
    }) || r.contains([0.0, 0.0], 0.0)
        || (r.center[0] >= 0.0
            && r.center[1] >= 0.0
            && r.center[0] < img.width as f64
            && r.center[1] < img.height as f64);
    if !overlaps {
        return Err(Error::arg("rect does not overlap the image"));
    }
    let (cw, ch) = (cw as usize, ch as usize);
    let fill = img.mean();
    let (s, c) = r.theta.to_radians().sin_cos();
    let (ox, oy) = ((cw as f64 - 1.0) / 2.0, (ch as f64 - 1.0) / 2.0);
    let mut data = Vec::with_capacity(cw * ch);
    for j in 0..ch {
        let v = j as f64 - oy;
        for i in 0..cw {
            let u = i as f64 - ox;
            let x = r.center[0] + u * c - v * s;
            let y = r.center[1] + u * s + v * c;
            data.push(bilinear(img, x, y).unwrap_or(fill));
        }
    }
    let mut pixels = GrayImage::new(cw, ch, data)?;
    pixels.id = img.id.clone();
    Ok(SquareCrop {
        pixels,
        source_rect: *r,
        image_id: img.id.clone(),
        label: None,
    })
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let (maxx, maxy) = ((img.width - 1) as f64, (img.height - 1) as f64);
    if x < -EPS || y < -EPS || x > maxx + EPS || y > maxy + EPS {
        return None;
    }
    let (x, y) = (x.clamp(0.0, maxx), y.clamp(0.0, maxy));
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    Some(if fy == 0.0 {
        top
    } else {
        top * (1.0 - fy) + bottom * fy
    })
}

/// Tunables for the whole square-localization pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareParams {
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub connectivity: Connectivity,
    /// `None` uses [`default_min_component_size`].
    pub min_component_size: Option<usize>,
}

impl Default for SquareParams {
    fn default() -> Self {
        Self {
            em_tol: crate::segment::DEFAULT_TOL,
            em_max_iters: crate::segment::DEFAULT_MAX_ITERS,
            connectivity: Connectivity::Four,
            min_component_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareDetection {
    pub mixture: PoissonMixture,
    pub polygons: Vec<ConvexPolygon>,
    pub solution: AngleSolution,
}

/// Mixture segmentation, flood fill, hulls and grid-angle search.
pub fn detect_squares(img: &GrayImage, params: &SquareParams) -> Result<SquareDetection> {
    let mixture = fit_poisson_mixture(img, params.em_tol, params.em_max_iters)?;
    let mask = classify_pixels(img, &mixture)?;
    let min_size = params
        .min_component_size
        .unwrap_or_else(|| default_min_component_size(img.width, img.height));
    let components = connected_components(&mask, params.connectivity, min_size);
    let polygons = components
        .iter()
        .map(convex_hull)
        .collect::<Result<Vec<_>>>()?;
    let solution = optimize_grid_angle(&polygons)?;
    Ok(SquareDetection {
        mixture,
        polygons,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn comp(pixels: &[(usize, usize)]) -> PixelComponent {
        PixelComponent {
            pixels: pixels.to_vec(),
        }
    }

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    #[test]
    fn hull_of_solid_block() {
        let px: Vec<_> = (0..3).flat_map(|y| (0..3).map(move |x| (x, y))).collect();
        let h = convex_hull(&comp(&px)).unwrap();
        assert_eq!(
            h.vertices,
            vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]
        );
        assert!(h.signed_area() > 0.0);
    }

    #[test]
    fn hull_of_line_is_widened() {
        let px: Vec<_> = (0..6).map(|i| (2 + i, 3 + i)).collect();
        let h = convex_hull(&comp(&px)).unwrap();
        assert_eq!(h.vertices.len(), 4);
        let r = min_rect_at_angle(&h, 45.0);
        assert_abs_diff_eq!(r.height, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.width, 5.0 * 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn hull_of_single_pixel() {
        let h = convex_hull(&comp(&[(4, 4)])).unwrap();
        assert_abs_diff_eq!(h.signed_area(), 1.0);
    }

    #[test]
    fn hull_of_empty_is_error() {
        assert!(convex_hull(&comp(&[])).is_err());
    }

    #[test]
    fn unit_square_rects() {
        assert_abs_diff_eq!(
            min_rect_at_angle(&unit_square(), 0.0).area(),
            1.0,
            epsilon = 1e-12
        );
        let r = min_rect_at_angle(&unit_square(), 45.0);
        assert_abs_diff_eq!(r.area(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.width, 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.center[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.center[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn angle_reduction_swaps_sides() {
        let p = ConvexPolygon {
            vertices: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [0.0, 1.0]],
        };
        let a = min_rect_at_angle(&p, 10.0);
        let b = min_rect_at_angle(&p, 100.0);
        assert_abs_diff_eq!(b.theta, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.width, b.width, epsilon = 1e-9);
        assert_abs_diff_eq!(a.height, b.height, epsilon = 1e-9);
        let c = min_rect_at_angle(&p, -80.0);
        assert_abs_diff_eq!(c.theta, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.width, a.width, epsilon = 1e-9);
    }

    #[test]
    fn empty_polygon_list_is_error() {
        assert!(optimize_grid_angle(&[]).is_err());
    }

    #[test]
    fn axis_aligned_square_solution() {
        let sol = optimize_grid_angle(&[unit_square()]).unwrap();
        assert!(sol.total_area <= total_area_at(&[unit_square()], 0.0) + 1e-12);
        assert!(sol.theta < 1e-3 || sol.theta > 90.0 - 1e-3);
    }

    #[test]
    fn axis_aligned_crop_is_exact_copy() {
        let img = GrayImage::from_fn(10, 8, |x, y| (x * 10 + y) as f64);
        let r = RotatedRect {
            center: [2.0 + 1.5, 3.0 + 1.0],
            width: 4.0,
            height: 3.0,
            theta: 0.0,
        };
        let crop = crop_square(&img, &r).unwrap();
        assert_eq!((crop.pixels.width, crop.pixels.height), (4, 3));
        for j in 0..3 {
            for i in 0..4 {
                assert_eq!(crop.pixels.get(i, j), img.get(2 + i, 3 + j));
            }
        }
    }

    #[test]
    fn constant_image_crop_is_constant() {
        let img = GrayImage::new(6, 6, vec![3.25; 36]).unwrap();
        let r = RotatedRect {
            center: [3.0, 2.0],
            width: 5.2,
            height: 7.9,
            theta: 33.0,
        };
        let crop = crop_square(&img, &r).unwrap();
        assert_eq!((crop.pixels.width, crop.pixels.height), (5, 8));
        assert!(crop.pixels.data.iter().all(|&v| (v - 3.25).abs() < 1e-12));
    }

    #[test]
    fn quarter_turn_crop_matches_rotated_image() {
        let img = GrayImage::from_fn(9, 7, |x, y| {
            (x * x + 3 * y) as f64 + if x == 1 && y == 5 { 40.0 } else { 0.0 }
        });
        let r90 = RotatedRect {
            center: [4.0, 3.0],
            width: 5.0,
            height: 3.0,
            theta: 90.0,
        };
        let a = crop_square(&img, &r90).unwrap();
        // Under the CCW rot90 a source point (x, y) lands at (y, W - 1 - x).
        let rot = img.rot90();
        let r0 = RotatedRect {
            center: [3.0, (img.width - 1) as f64 - 4.0],
            width: 5.0,
            height: 3.0,
            theta: 0.0,
        };
        let b = crop_square(&rot, &r0).unwrap();
        for j in 0..3 {
            for i in 0..5 {
                assert_abs_diff_eq!(a.pixels.get(i, j), b.pixels.get(i, j), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn zero_area_crop_is_error() {
        let img = GrayImage::new(4, 4, vec![1.0; 16]).unwrap();
        let r = RotatedRect {
            center: [2.0, 2.0],
            width: 0.2,
            height: 3.0,
            theta: 0.0,
        };
        assert!(crop_square(&img, &r).is_err());
    }

    #[test]
    fn out_of_bounds_samples_use_mean() {
        let img = GrayImage::from_fn(4, 4, |x, _| x as f64);
        let r = RotatedRect {
            center: [0.0, 1.5],
            width: 3.0,
            height: 1.0,
            theta: 0.0,
        };
        let crop = crop_square(&img, &r).unwrap();
        assert_eq!(crop.pixels.data, vec![1.5, 0.0, 1.0]);
    }
}
