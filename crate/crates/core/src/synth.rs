//! Synthetic low- and medium-magnification images with exact ground truth.
//!
//! Every generator is a pure function of its config and seed. Pixel
//! intensities are Poisson draws around a background and a foreground rate.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmatch::{write_selections, Selection};
use crate::imgio::{save_pmap, write_mrc, GrayImage, MrcMode, ProbabilityMap};
use crate::squares::Point;

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    Poisson::new(rate).map(|d| d.sample(rng)).unwrap_or(rate)
}

/// Derives the seed of item `k` from a base seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowMagConfig {
    pub width: usize,
    pub height: usize,
    /// Distance between neighboring square centers.
    pub grid_pitch: f64,
    /// Nominal square side.
    pub square_size: f64,
    /// Grid angle in degrees.
    pub angle: f64,
    pub bg_rate: f64,
    pub fg_rate: f64,
    /// Fraction of squares drawn with a missing corner.
    pub broken_fraction: f64,
    /// Each side is scaled by a uniform factor in `[1 − j, 1 + j]`.
    pub size_jitter: f64,
}

impl Default for LowMagConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            grid_pitch: 64.0,
            square_size: 44.0,
            angle: 17.0,
            bg_rate: 5.0,
            fg_rate: 50.0,
            broken_fraction: 0.1,
            size_jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSquare {
    pub center: Point,
    pub size: f64,
    pub broken: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowMagTruth {
    /// Degrees in `[0, 90)`.
    pub angle: f64,
    pub squares: Vec<PlantedSquare>,
    pub image: GrayImage,
}

/// Serializable part of [`LowMagTruth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowMagAnnotation {
    pub kind: String,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub angle: f64,
    pub squares: Vec<PlantedSquare>,
}

impl LowMagTruth {
    pub fn annotation(&self) -> LowMagAnnotation {
        LowMagAnnotation {
            kind: "lowmag".into(),
            image_id: self.image.id.clone(),
            width: self.image.width,
            height: self.image.height,
            angle: self.angle,
            squares: self.squares.clone(),
        }
    }
}

/// Squares on a rotated grid with a random phase.
///
/// Only squares lying fully inside the image (one pixel clear of the border)
/// are drawn. A square is selected with probability 0.9 when it is unbroken
/// and at least nominal size, 0.1 otherwise, so area carries the label
/// signal.
pub fn gen_lowmag(cfg: &LowMagConfig, seed: u64) -> Result<LowMagTruth> {
    if !(cfg.bg_rate > 0.0 && cfg.fg_rate > cfg.bg_rate) {
        return Err(Error::arg(format!(
            "need fg_rate > bg_rate > 0, got bg {} fg {}",
            cfg.bg_rate, cfg.fg_rate
        )));
    }
    if !(cfg.square_size > 1.0 && cfg.grid_pitch > cfg.square_size * (1.0 + cfg.size_jitter) + 2.0)
    {
        return Err(Error::arg("squares must be smaller than the grid pitch"));
    }
    if !(0.0..=1.0).contains(&cfg.broken_fraction) || !(0.0..0.5).contains(&cfg.size_jitter) {
        return Err(Error::arg(
            "broken_fraction must be in [0, 1] and size_jitter in [0, 0.5)",
        ));
    }
    if cfg.width == 0 || cfg.height == 0 {
        return Err(Error::arg("empty image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = cfg.angle.rem_euclid(90.0);
    let (s, c) = angle.to_radians().sin_cos();
    let (e1, e2) = ([c, s], [-s, c]);
    let origin = [
        rng.random_range(0.0..cfg.grid_pitch),
        rng.random_range(0.0..cfg.grid_pitch),
    ];
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let reach = (w.hypot(h) / cfg.grid_pitch).ceil() as i64 + 1;
    let mut squares = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            let (fi, fj) = (i as f64 * cfg.grid_pitch, j as f64 * cfg.grid_pitch);
            let center = [
                origin[0] + fi * e1[0] + fj * e2[0],
                origin[1] + fi * e1[1] + fj * e2[1],
            ];
            let size = cfg.square_size * (1.0 + rng.random_range(-1.0..=1.0) * cfg.size_jitter);
            let broken = rng.random::<f64>() < cfg.broken_fraction;
            let sel_draw = rng.random::<f64>();
            let half = 0.5 * size * (c.abs() + s.abs());
            if center[0] - half < 1.0
                || center[1] - half < 1.0
                || center[0] + half > w - 2.0
                || center[1] + half > h - 2.0
            {
                continue;
            }
            let good = !broken && size >= cfg.square_size;
            squares.push(PlantedSquare {
                center,
                size,
                broken,
                selected: sel_draw < if good { 0.9 } else { 0.1 },
            });
        }
    }
    // Rasterize each square into the foreground mask.
    let mut data = vec![0.0; cfg.width * cfg.height];
    let mut inside = vec![false; cfg.width * cfg.height];
    for sq in &squares {
        let half = 0.5 * sq.size;
        let ext = half * (c.abs() + s.abs()) + 1.0;
        let (x0, x1) = (
            (sq.center[0] - ext).floor().max(0.0) as usize,
            ((sq.center[0] + ext).ceil() as usize).min(cfg.width - 1),
        );
        let (y0, y1) = (
            (sq.center[1] - ext).floor().max(0.0) as usize,
            ((sq.center[1] + ext).ceil() as usize).min(cfg.height - 1),
        );
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - sq.center[0], y as f64 - sq.center[1]);
                let a = dx * e1[0] + dy * e1[1];
                let b = dx * e2[0] + dy * e2[1];
                if a.abs() > half || b.abs() > half {
                    continue;
                }
                // broken squares lose the corner triangle near (+half, +half)
                if sq.broken && a + b > 0.9 * half {
                    continue;
                }
                inside[y * cfg.width + x] = true;
            }
        }
    }
    for (v, &fg) in data.iter_mut().zip(&inside) {
        *v = poisson(&mut rng, if fg { cfg.fg_rate } else { cfg.bg_rate });
    }
    Ok(LowMagTruth {
        angle,
        squares,
        image: GrayImage::new(cfg.width, cfg.height, data)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MedMagConfig {
    pub width: usize,
    pub height: usize,
    /// Lattice spacing.
    pub d_l: f64,
    pub hole_radius: f64,
    /// Lattice angle in degrees; `None` draws one uniformly from `[0, 90)`.
    pub angle: Option<f64>,
    /// Fraction of holes missing from the probability map.
    pub delete_frac: f64,
    /// Off-lattice blobs added to the probability map.
    pub spurious_blobs: usize,
    /// Holes darker than background.
    pub invert: bool,
    /// Hole rate is `bg_rate · (1 + contrast)`.
    pub contrast: f64,
    pub bg_rate: f64,
    /// Operator selection probability for holes kept in the map.
    pub select_prob: f64,
    /// Operator selection probability for holes deleted from the map.
    pub select_prob_deleted: f64,
}

impl Default for MedMagConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            d_l: 32.0,
            hole_radius: 8.0,
            angle: None,
            delete_frac: 0.2,
            spurious_blobs: 5,
            invert: false,
            contrast: 1.5,
            bg_rate: 20.0,
            select_prob: 0.6,
            select_prob_deleted: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedMagTruth {
    pub anchor_a: Point,
    pub anchor_b: Point,
    pub spacing: f64,
    /// Degrees in `[0, 90)`.
    pub angle: f64,
    /// Lattice points whose hole disk lies inside the image.
    pub holes: Vec<Point>,
    /// Indices into `holes` absent from the map.
    pub deleted: Vec<usize>,
    pub spurious: Vec<Point>,
    /// Indices into `holes` picked by the operator.
    pub selected: Vec<usize>,
    pub inverted: bool,
    pub image: GrayImage,
    pub map: ProbabilityMap,
}

/// Serializable part of [`MedMagTruth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedMagAnnotation {
    pub kind: String,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub anchor_a: Point,
    pub anchor_b: Point,
    pub spacing: f64,
    pub angle: f64,
    pub holes: Vec<Point>,
    pub deleted: Vec<usize>,
    pub spurious: Vec<Point>,
    pub selected: Vec<usize>,
    pub inverted: bool,
}

impl MedMagTruth {
    pub fn annotation(&self) -> MedMagAnnotation {
        MedMagAnnotation {
            kind: "medmag".into(),
            image_id: self.image.id.clone(),
            width: self.image.width,
            height: self.image.height,
            anchor_a: self.anchor_a,
            anchor_b: self.anchor_b,
            spacing: self.spacing,
            angle: self.angle,
            holes: self.holes.clone(),
            deleted: self.deleted.clone(),
            spurious: self.spurious.clone(),
            selected: self.selected.clone(),
            inverted: self.inverted,
        }
    }

    pub fn selection_points(&self) -> Vec<Point> {
        self.selected.iter().map(|&i| self.holes[i]).collect()
    }
}

/// Holes on a square lattice with an ideal probability map.
///
/// The map holds Gaussian blobs (σ = hole_radius / 3, peak 1, combined by
/// max) at the kept holes and at spurious points at least `0.35·d_l` from
/// every lattice point. Inversion replaces the image by `max − image` with
/// identical noise.
pub fn gen_medmag(cfg: &MedMagConfig, seed: u64) -> Result<MedMagTruth> {
    if !(cfg.hole_radius > 0.0 && cfg.d_l > 2.0 * cfg.hole_radius) {
        return Err(Error::arg(format!(
            "need d_l > 2·hole_radius > 0, got d_l {} radius {}",
            cfg.d_l, cfg.hole_radius
        )));
    }
    if !(0.0..=1.0).contains(&cfg.delete_frac)
        || !(0.0..=1.0).contains(&cfg.select_prob)
        || !(0.0..=1.0).contains(&cfg.select_prob_deleted)
    {
        return Err(Error::arg("fractions and probabilities must lie in [0, 1]"));
    }
    if !(cfg.bg_rate > 0.0 && cfg.contrast > 0.0) {
        return Err(Error::arg("bg_rate and contrast must be positive"));
    }
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    if w < 2.0 * cfg.hole_radius + 2.0 || h < 2.0 * cfg.hole_radius + 2.0 {
        return Err(Error::arg("image too small for a single hole"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = match cfg.angle {
        Some(a) => a.rem_euclid(90.0),
        None => rng.random_range(0.0..90.0),
    };
    let (s, c) = angle.to_radians().sin_cos();
    let d = cfg.d_l;
    let a = [rng.random_range(0.0..d), rng.random_range(0.0..d)];
    let u = [d * c, d * s];
    let v = [-u[1], u[0]];
    let b = [a[0] + u[0], a[1] + u[1]];
    let reach = (w.hypot(h) / d).ceil() as i64 + 1;
    let mut lattice = Vec::new();
    let mut holes = Vec::new();
    let r = cfg.hole_radius;
    for i in -reach..=reach {
        for j in -reach..=reach {
            let (fi, fj) = (i as f64, j as f64);
            let p = [a[0] + fi * u[0] + fj * v[0], a[1] + fi * u[1] + fj * v[1]];
            if p[0] < -d || p[1] < -d || p[0] > w + d || p[1] > h + d {
                continue;
            }
            lattice.push(p);
            if p[0] >= r && p[1] >= r && p[0] <= w - 1.0 - r && p[1] <= h - 1.0 - r {
                holes.push(p);
            }
        }
    }
    holes.sort_by(|p, q| p[1].total_cmp(&q[1]).then(p[0].total_cmp(&q[0])));
    let deleted: Vec<usize> = (0..holes.len())
        .filter(|_| rng.random::<f64>() < cfg.delete_frac)
        .collect();
    let min_gap = 0.35 * d;
    let mut spurious = Vec::new();
    let mut attempts = 0;
    while spurious.len() < cfg.spurious_blobs {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::arg("could not place spurious blobs off the lattice"));
        }
        let p = [
            rng.random_range(r..w - 1.0 - r),
            rng.random_range(r..h - 1.0 - r),
        ];
        if lattice
            .iter()
            .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_gap)
        {
            spurious.push(p);
        }
    }
    let is_deleted = {
        let mut f = vec![false; holes.len()];
        deleted.iter().for_each(|&i| f[i] = true);
        f
    };
    let selected: Vec<usize> = (0..holes.len())
        .filter(|&i| {
            let p = if is_deleted[i] {
                cfg.select_prob_deleted
            } else {
                cfg.select_prob
            };
            rng.random::<f64>() < p
        })
        .collect();

    let sigma = r / 3.0;
    let mut map = vec![0.0f32; cfg.width * cfg.height];
    let blobs = holes
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_deleted[*i])
        .map(|(_, p)| *p)
        .chain(spurious.iter().copied());
    for p in blobs {
        let ext = 4.0 * sigma;
        let (x0, x1) = (
            (p[0] - ext).floor().max(0.0) as usize,
            ((p[0] + ext).ceil().max(0.0) as usize).min(cfg.width - 1),
        );
        let (y0, y1) = (
            (p[1] - ext).floor().max(0.0) as usize,
            ((p[1] + ext).ceil().max(0.0) as usize).min(cfg.height - 1),
        );
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2);
                let o = (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                let cell = &mut map[y * cfg.width + x];
                *cell = cell.max(o);
            }
        }
    }

    let hole_rate = cfg.bg_rate * (1.0 + cfg.contrast);
    let mut data = Vec::with_capacity(cfg.width * cfg.height);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let (px, py) = (x as f64, y as f64);
            // nearest lattice point via lattice coordinates
            let (dx, dy) = (px - a[0], py - a[1]);
            let fi = ((dx * u[0] + dy * u[1]) / (d * d)).round();
            let fj = ((dx * v[0] + dy * v[1]) / (d * d)).round();
            let q = [a[0] + fi * u[0] + fj * v[0], a[1] + fi * u[1] + fj * v[1]];
            let in_hole = (px - q[0]).hypot(py - q[1]) <= r;
            data.push(poisson(
                &mut rng,
                if in_hole { hole_rate } else { cfg.bg_rate },
            ));
        }
    }
    let mut image = GrayImage::new(cfg.width, cfg.height, data)?;
    if cfg.invert {
        image = invert(&image);
    }
    Ok(MedMagTruth {
        anchor_a: a,
        anchor_b: b,
        spacing: d,
        angle,
        holes,
        deleted,
        spurious,
        selected,
        inverted: cfg.invert,
        image,
        map: ProbabilityMap::new(cfg.width, cfg.height, map)?,
    })
}

/// `max − img`, pixel-wise.
pub fn invert(img: &GrayImage) -> GrayImage {
    let m = img.max();
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v = m - *v);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub sessions: usize,
    pub lowmag_per_session: usize,
    pub medmag_per_session: usize,
    pub lowmag: LowMagConfig,
    pub medmag: MedMagConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sessions: 2,
            lowmag_per_session: 3,
            medmag_per_session: 3,
            lowmag: LowMagConfig::default(),
            medmag: MedMagConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub lowmag_images: Vec<PathBuf>,
    pub medmag_images: Vec<PathBuf>,
}

pub const LOWMAG_DIR: &str = "lowmag";
pub const MEDMAG_DIR: &str = "medmag";

/// Writes a dataset:
///
/// ```text
/// out/lowmag/{session}/{image}.{mrc,json}
/// out/medmag/{session}/{image}.{mrc,pmap,json}
/// out/lowmag_centers.csv      every planted square center
/// out/lowmag_selections.csv   selected squares
/// out/medmag_holes.csv        every hole center
/// out/medmag_selections.csv   operator-picked holes
/// ```
///
/// Images are MRC mode 2. Image `k` of a kind draws its seed from
/// [`derive_seed`], so the result does not depend on thread scheduling.
pub fn write_dataset(out: &Path, cfg: &DatasetConfig) -> Result<DatasetSummary> {
    struct Job {
        session: String,
        id: String,
        low: bool,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for s in 0..cfg.sessions {
        let session = format!("s{s:02}");
        for k in 0..cfg.lowmag_per_session {
            let n = (s * cfg.lowmag_per_session + k) as u64;
            jobs.push(Job {
                id: format!("{session}_low_{k:03}"),
                session: session.clone(),
                low: true,
                seed: derive_seed(cfg.seed, 2 * n),
            });
        }
        for k in 0..cfg.medmag_per_session {
            let n = (s * cfg.medmag_per_session + k) as u64;
            jobs.push(Job {
                id: format!("{session}_med_{k:03}"),
                session: session.clone(),
                low: false,
                seed: derive_seed(cfg.seed, 2 * n + 1),
            });
        }
    }
    type Rows = (Vec<Selection>, Vec<Selection>);
    let results: Vec<Result<(PathBuf, bool, Rows)>> = jobs
        .par_iter()
        .map(|job| {
            let kind_dir = if job.low { LOWMAG_DIR } else { MEDMAG_DIR };
            let dir = out.join(kind_dir).join(&job.session);
            std::fs::create_dir_all(&dir)?;
            let sel = |p: Point| Selection {
                image_id: job.id.clone(),
                session_id: job.session.clone(),
                x: p[0],
                y: p[1],
            };
            let mrc_path = dir.join(format!("{}.mrc", job.id));
            if job.low {
                let mut t = gen_lowmag(&cfg.lowmag, job.seed)?;
                t.image.id = job.id.clone();
                std::fs::write(&mrc_path, write_mrc(&t.image, MrcMode::Float32)?)?;
                std::fs::write(
                    dir.join(format!("{}.json", job.id)),
                    serde_json::to_vec_pretty(&t.annotation())?,
                )?;
                let all = t.squares.iter().map(|q| sel(q.center)).collect();
                let picked = t
                    .squares
                    .iter()
                    .filter(|q| q.selected)
                    .map(|q| sel(q.center))
                    .collect();
                Ok((mrc_path, true, (all, picked)))
            } else {
                let mut t = gen_medmag(&cfg.medmag, job.seed)?;
                t.image.id = job.id.clone();
                std::fs::write(&mrc_path, write_mrc(&t.image, MrcMode::Float32)?)?;
                save_pmap(&t.map, dir.join(format!("{}.pmap", job.id)))?;
                std::fs::write(
                    dir.join(format!("{}.json", job.id)),
                    serde_json::to_vec_pretty(&t.annotation())?,
                )?;
                let all = t.holes.iter().map(|&p| sel(p)).collect();
                let picked = t.selection_points().into_iter().map(sel).collect();
                Ok((mrc_path, false, (all, picked)))
            }
        })
        .collect();
    let mut summary = DatasetSummary {
        lowmag_images: Vec::new(),
        medmag_images: Vec::new(),
    };
    let (mut low_all, mut low_sel, mut med_all, mut med_sel) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in results {
        let (path, low, (all, picked)) = r?;
        if low {
            summary.lowmag_images.push(path);
            low_all.extend(all);
            low_sel.extend(picked);
        } else {
            summary.medmag_images.push(path);
            med_all.extend(all);
            med_sel.extend(picked);
        }
    }
    std::fs::create_dir_all(out)?;
    for (name, rows) in [
        ("lowmag_centers.csv", &low_all),
        ("lowmag_selections.csv", &low_sel),
        ("medmag_holes.csv", &med_all),
        ("medmag_selections.csv", &med_sel),
    ] {
        write_selections(std::fs::File::create(out.join(name))?, rows)?;
    }
    Ok(summary)
}
