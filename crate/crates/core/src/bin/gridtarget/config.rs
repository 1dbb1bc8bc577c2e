//! Flat `key = value` configuration. Command-line flags override file
//! values, which override built-in defaults.

use std::path::Path;

use gridtarget::lattice::CostWeights;
use gridtarget::segment::{Connectivity, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use gridtarget::synth::DatasetConfig;
use gridtarget::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub connectivity: Connectivity,
    pub min_component_size: Option<usize>,
    /// Radius of the evaluation circle around each detected square center.
    pub region_radius: f64,
    pub k: usize,
    pub w_fp: f64,
    pub w_fn: f64,
    pub centroid_threshold: f64,
    pub min_region: usize,
    pub crop_margin: f64,
    pub prob_threshold: Option<f64>,
    pub render_radius: Option<f64>,
    pub circle_radius: f64,
    pub seed: u64,
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub importance_repeats: usize,
    pub synth: DatasetConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            em_tol: DEFAULT_TOL,
            em_max_iters: DEFAULT_MAX_ITERS,
            connectivity: Connectivity::Four,
            min_component_size: None,
            region_radius: 5.0,
            k: 6,
            w_fp: 1.0,
            w_fn: 2.0,
            centroid_threshold: 0.5,
            min_region: 4,
            crop_margin: 60.0,
            prob_threshold: None,
            render_radius: None,
            circle_radius: 50.0,
            seed: 0,
            trees: 100,
            max_depth: None,
            importance_repeats: 10,
            synth: DatasetConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Argument(format!("config key {key}: cannot parse {value:?}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)?;
            cfg.apply_text(&text)?;
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Argument(format!(
                    "config line {}: expected key = value",
                    n + 1
                )));
            };
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "em_tol" => self.em_tol = parse(key, v)?,
            "em_max_iters" => self.em_max_iters = parse(key, v)?,
            "connectivity" => self.connectivity = Connectivity::from_count(parse(key, v)?)?,
            "min_component_size" => self.min_component_size = parse_opt(key, v)?,
            "region_radius" => self.region_radius = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "w_fp" => self.w_fp = parse(key, v)?,
            "w_fn" => self.w_fn = parse(key, v)?,
            "centroid_threshold" => self.centroid_threshold = parse(key, v)?,
            "min_region" => self.min_region = parse(key, v)?,
            "crop_margin" => self.crop_margin = parse(key, v)?,
            "prob_threshold" => self.prob_threshold = parse_opt(key, v)?,
            "render_radius" => self.render_radius = parse_opt(key, v)?,
            "circle_radius" => self.circle_radius = parse(key, v)?,
            "seed" => {
                self.seed = parse(key, v)?;
                s.seed = self.seed;
            }
            "trees" => self.trees = parse(key, v)?,
            "max_depth" => self.max_depth = parse_opt(key, v)?,
            "importance_repeats" => self.importance_repeats = parse(key, v)?,
            "sessions" => s.sessions = parse(key, v)?,
            "lowmag_per_session" => s.lowmag_per_session = parse(key, v)?,
            "medmag_per_session" => s.medmag_per_session = parse(key, v)?,
            "lowmag.width" => s.lowmag.width = parse(key, v)?,
            "lowmag.height" => s.lowmag.height = parse(key, v)?,
            "lowmag.grid_pitch" => s.lowmag.grid_pitch = parse(key, v)?,
            "lowmag.square_size" => s.lowmag.square_size = parse(key, v)?,
            "lowmag.angle" => s.lowmag.angle = parse(key, v)?,
            "lowmag.bg_rate" => s.lowmag.bg_rate = parse(key, v)?,
            "lowmag.fg_rate" => s.lowmag.fg_rate = parse(key, v)?,
            "lowmag.broken_fraction" => s.lowmag.broken_fraction = parse(key, v)?,
            "lowmag.size_jitter" => s.lowmag.size_jitter = parse(key, v)?,
            "medmag.width" => s.medmag.width = parse(key, v)?,
            "medmag.height" => s.medmag.height = parse(key, v)?,
            "medmag.d_l" => s.medmag.d_l = parse(key, v)?,
            "medmag.hole_radius" => s.medmag.hole_radius = parse(key, v)?,
            "medmag.angle" => s.medmag.angle = parse_opt(key, v)?,
            "medmag.delete_frac" => s.medmag.delete_frac = parse(key, v)?,
            "medmag.spurious_blobs" => s.medmag.spurious_blobs = parse(key, v)?,
            "medmag.invert" => s.medmag.invert = parse(key, v)?,
            "medmag.contrast" => s.medmag.contrast = parse(key, v)?,
            "medmag.bg_rate" => s.medmag.bg_rate = parse(key, v)?,
            "medmag.select_prob" => s.medmag.select_prob = parse(key, v)?,
            "medmag.select_prob_deleted" => s.medmag.select_prob_deleted = parse(key, v)?,
            other => return Err(Error::Argument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<CostWeights> {
        CostWeights::new(self.w_fp, self.w_fn)
    }
}
