//! Command-line front end: square detection and ranking, lattice fitting,
//! evaluation, classifier training and synthetic data.

mod config;
mod overlay;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gridtarget::classify::{
    extract_features, load_model, permutation_importance, predict_scores, roc_auc, session_mean,
    train_forest, train_logreg, ForestParams, LogRegParams, Metric, Model, SavedModel, Scorer,
    FEATURE_NAMES,
};
use gridtarget::evalmatch::{
    evaluate, format_table, read_regions, read_selections, write_regions, Region, RegionRecord,
    RegionSource, Selection, Shape,
};
use gridtarget::imgio::{load_image, load_pmap, save_image, ImageFormat, MrcMode};
use gridtarget::lattice::{centroid_regions, fit_lattice, lattice_crops, Centroid, LatticeParams};
use gridtarget::segment::{Connectivity, PoissonMixture};
use gridtarget::squares::{crop_square, detect_squares, Point, RotatedRect, SquareParams};
use gridtarget::synth::write_dataset;
use gridtarget::{Error, GrayImage, Result};

use config::PipelineConfig;
use overlay::Canvas;

const OUTPUT_VERSION: u32 = 1;
const IMAGE_EXTS: [&str; 3] = ["mrc", "pgm", "png"];

#[derive(Parser)]
#[command(
    name = "gridtarget",
    version,
    about = "Cryo-EM grid square and hole targeting"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// Flat key = value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SquareFlags {
    #[arg(long)]
    em_tol: Option<f64>,
    #[arg(long)]
    em_max_iters: Option<usize>,
    /// 4 or 8.
    #[arg(long)]
    connectivity: Option<u8>,
    #[arg(long)]
    min_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect squares in low-mag images.
    Squares {
        /// Image files or directories (searched recursively).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
        #[command(flatten)]
        flags: SquareFlags,
        /// Radius of the evaluation circle around each detected center.
        #[arg(long)]
        region_radius: Option<f64>,
        /// Selections CSV used to label the feature rows.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Detect, crop and score squares with a trained model.
    RankSquares {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
        #[command(flatten)]
        flags: SquareFlags,
    },
    /// Fit hole lattices to probability maps.
    FitLattice {
        /// PMAP files or directories. An image with the same stem next to a
        /// map is used for crops and overlays.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        w_fp: Option<f64>,
        #[arg(long)]
        w_fn: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        min_region: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        /// Keep only crops whose summed probability exceeds this.
        #[arg(long)]
        prob_threshold: Option<f64>,
        #[arg(long)]
        circle_radius: Option<f64>,
        /// Write each crop as an MRC file.
        #[arg(long)]
        write_crops: bool,
    },
    /// Match regions against selections and report per-session metrics.
    Eval {
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        selections: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Train a square classifier from a features CSV.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelKind::Logreg)]
        model: ModelKind,
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        importance_repeats: Option<usize>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        lowmag: Option<usize>,
        #[arg(long)]
        medmag: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Logreg,
    Forest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_)
                | Error::Format(_)
                | Error::Corrupt(_)
                | Error::Argument(_)
                | Error::Geometry(_)
                | Error::Json(_)
                | Error::Csv(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Squares {
            inputs,
            out,
            cfg,
            flags,
            region_radius,
            labels,
        } => {
            let mut c = PipelineConfig::load(cfg.config.as_deref())?;
            apply_square_flags(&mut c, &flags)?;
            if let Some(r) = region_radius {
                c.region_radius = r;
            }
            cmd_squares(&inputs, &out, &c, labels.as_deref())
        }
        Command::RankSquares {
            inputs,
            model,
            out,
            cfg,
            flags,
        } => {
            let mut c = PipelineConfig::load(cfg.config.as_deref())?;
            apply_square_flags(&mut c, &flags)?;
            cmd_rank_squares(&inputs, &model, &out, &c)
        }
        Command::FitLattice {
            inputs,
            out,
            cfg,
            k,
            w_fp,
            w_fn,
            threshold,
            min_region,
            radius,
            margin,
            prob_threshold,
            circle_radius,
            write_crops,
        } => {
            let mut c = PipelineConfig::load(cfg.config.as_deref())?;
            override_opt(&mut c.k, k);
            override_opt(&mut c.w_fp, w_fp);
            override_opt(&mut c.w_fn, w_fn);
            override_opt(&mut c.centroid_threshold, threshold);
            override_opt(&mut c.min_region, min_region);
            override_opt(&mut c.crop_margin, margin);
            override_opt(&mut c.circle_radius, circle_radius);
            if radius.is_some() {
                c.render_radius = radius;
            }
            if prob_threshold.is_some() {
                c.prob_threshold = prob_threshold;
            }
            cmd_fit_lattice(&inputs, &out, &c, write_crops)
        }
        Command::Eval {
            regions,
            selections,
            json,
        } => cmd_eval(&regions, &selections, json.as_deref()),
        Command::Train {
            features,
            out,
            model,
            cfg,
            trees,
            max_depth,
            seed,
            importance_repeats,
        } => {
            let mut c = PipelineConfig::load(cfg.config.as_deref())?;
            override_opt(&mut c.trees, trees);
            override_opt(&mut c.seed, seed);
            override_opt(&mut c.importance_repeats, importance_repeats);
            if max_depth.is_some() {
                c.max_depth = max_depth;
            }
            cmd_train(&features, &out, model, &c)
        }
        Command::Synth {
            out,
            cfg,
            seed,
            sessions,
            lowmag,
            medmag,
        } => {
            let mut c = PipelineConfig::load(cfg.config.as_deref())?;
            override_opt(&mut c.synth.seed, seed);
            override_opt(&mut c.synth.sessions, sessions);
            override_opt(&mut c.synth.lowmag_per_session, lowmag);
            override_opt(&mut c.synth.medmag_per_session, medmag);
            let summary = write_dataset(&out, &c.synth)?;
            write_atomic(
                &out.join("synth_config.json"),
                &serde_json::to_vec_pretty(&c.synth)?,
            )?;
            println!(
                "wrote {} low-mag and {} med-mag images to {}",
                summary.lowmag_images.len(),
                summary.medmag_images.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn override_opt<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_square_flags(c: &mut PipelineConfig, f: &SquareFlags) -> Result<()> {
    override_opt(&mut c.em_tol, f.em_tol);
    override_opt(&mut c.em_max_iters, f.em_max_iters);
    if let Some(n) = f.connectivity {
        c.connectivity = Connectivity::from_count(n)?;
    }
    if f.min_size.is_some() {
        c.min_component_size = f.min_size;
    }
    Ok(())
}

fn square_params(c: &PipelineConfig) -> SquareParams {
    SquareParams {
        em_tol: c.em_tol,
        em_max_iters: c.em_max_iters,
        connectivity: c.connectivity,
        min_component_size: c.min_component_size,
    }
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn has_ext(p: &Path, exts: &[&str]) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Files with one of `exts`, expanding directories recursively; sorted.
fn collect_inputs(inputs: &[PathBuf], exts: &[&str]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, exts: &[&str], out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(&p, exts, out)?;
            } else if has_ext(&p, exts) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            walk(p, exts, &mut out)?;
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found", p.display()),
            )));
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Argument("no input files found".into()));
    }
    Ok(out)
}

fn session_of(path: &Path) -> String {
    path.parent()
        .and_then(|d| d.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or("default")
        .to_string()
}

#[derive(Serialize, Deserialize)]
struct SquaresOutput {
    version: u32,
    image_id: String,
    session_id: String,
    width: usize,
    height: usize,
    theta: f64,
    total_area: f64,
    mixture: PoissonMixture,
    rects: Vec<RotatedRect>,
}

#[derive(Serialize)]
struct FeatureRow {
    image_id: String,
    session_id: String,
    index: usize,
    mean: f64,
    max: f64,
    min: f64,
    variance: f64,
    skew: f64,
    kurtosis: f64,
    area: f64,
    label: Option<u8>,
}

fn feature_row(
    image_id: &str,
    session_id: &str,
    index: usize,
    f: [f64; 7],
    label: Option<bool>,
) -> FeatureRow {
    FeatureRow {
        image_id: image_id.into(),
        session_id: session_id.into(),
        index,
        mean: f[0],
        max: f[1],
        min: f[2],
        variance: f[3],
        skew: f[4],
        kurtosis: f[5],
        area: f[6],
        label: label.map(u8::from),
    }
}

struct Detected {
    image: GrayImage,
    session: String,
    out: SquaresOutput,
}

fn detect_all(inputs: &[PathBuf], c: &PipelineConfig) -> Result<Vec<Detected>> {
    let files = collect_inputs(inputs, &IMAGE_EXTS)?;
    let params = square_params(c);
    files
        .par_iter()
        .map(|path| {
            let image = load_image(path)?;
            let det = detect_squares(&image, &params)?;
            let session = session_of(path);
            let out = SquaresOutput {
                version: OUTPUT_VERSION,
                image_id: image.id.clone(),
                session_id: session.clone(),
                width: image.width,
                height: image.height,
                theta: det.solution.theta,
                total_area: det.solution.total_area,
                mixture: det.mixture,
                rects: det.solution.rects,
            };
            Ok(Detected {
                image,
                session,
                out,
            })
        })
        .collect()
}

fn cmd_squares(
    inputs: &[PathBuf],
    out: &Path,
    c: &PipelineConfig,
    labels: Option<&Path>,
) -> Result<()> {
    if c.region_radius.is_nan() || c.region_radius <= 0.0 {
        return Err(Error::Argument("region_radius must be positive".into()));
    }
    let label_sels = match labels {
        Some(p) => Some(read_selections(std::fs::File::open(p)?)?),
        None => None,
    };
    let detected = detect_all(inputs, c)?;
    let mut regions = Vec::new();
    let mut features = Vec::new();
    for d in &detected {
        let id = &d.out.image_id;
        write_atomic(
            &out.join(format!("{id}.squares.json")),
            &serde_json::to_vec_pretty(&d.out)?,
        )?;
        let mut canvas = Canvas::from_gray(&d.image);
        for (i, r) in d.out.rects.iter().enumerate() {
            canvas.polygon(&r.corners(), overlay::YELLOW);
            canvas.cross(r.center, 3, overlay::RED);
            regions.push(RegionRecord {
                image_id: id.clone(),
                session_id: d.session.clone(),
                region: Region::new(
                    Shape::Circle {
                        center: r.center,
                        radius: c.region_radius,
                    },
                    RegionSource::DetectedSquare,
                )?,
            });
            let crop = crop_square(&d.image, r)?;
            let label = label_sels.as_ref().map(|sels| {
                sels.iter()
                    .any(|s| &s.image_id == id && r.contains(s.point(), 0.0))
            });
            features.push(feature_row(
                id,
                &d.session,
                i,
                extract_features(&crop).to_array(),
                label,
            ));
        }
        write_atomic(&out.join(format!("{id}.overlay.png")), &canvas.encode()?)?;
    }
    let mut buf = Vec::new();
    write_regions(&mut buf, &regions)?;
    write_atomic(&out.join("regions.csv"), &buf)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in &features {
        wtr.serialize(row)?;
    }
    let buf = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&out.join("features.csv"), &buf)?;
    let n: usize = detected.iter().map(|d| d.out.rects.len()).sum();
    println!(
        "{} images, {n} squares -> {}",
        detected.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RankedSquare {
    rank: usize,
    score: f64,
    rect: RotatedRect,
}

#[derive(Serialize)]
struct RankedOutput {
    version: u32,
    image_id: String,
    session_id: String,
    squares: Vec<RankedSquare>,
}

fn cmd_rank_squares(
    inputs: &[PathBuf],
    model: &Path,
    out: &Path,
    c: &PipelineConfig,
) -> Result<()> {
    let saved = load_model(model)?;
    let detected = detect_all(inputs, c)?;
    for d in &detected {
        let rows = d
            .out
            .rects
            .iter()
            .map(|r| {
                Ok(extract_features(&crop_square(&d.image, r)?)
                    .to_array()
                    .to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = predict_scores(&saved.model, &rows)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut canvas = Canvas::from_gray(&d.image);
        for &i in &order {
            canvas.polygon(&d.out.rects[i].corners(), overlay::ramp(scores[i]));
        }
        let ranked = RankedOutput {
            version: OUTPUT_VERSION,
            image_id: d.out.image_id.clone(),
            session_id: d.session.clone(),
            squares: order
                .iter()
                .enumerate()
                .map(|(rank, &i)| RankedSquare {
                    rank,
                    score: scores[i],
                    rect: d.out.rects[i],
                })
                .collect(),
        };
        let id = &d.out.image_id;
        write_atomic(
            &out.join(format!("{id}.ranked.json")),
            &serde_json::to_vec_pretty(&ranked)?,
        )?;
        write_atomic(&out.join(format!("{id}.ranked.png")), &canvas.encode()?)?;
    }
    println!(
        "ranked squares in {} images -> {}",
        detected.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CropEntry {
    center: Point,
    side: f64,
    prob_sum: f64,
    origin: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

#[derive(Serialize)]
struct LatticeOutput {
    version: u32,
    image_id: String,
    session_id: String,
    anchor_a: Point,
    anchor_b: Point,
    spacing: f64,
    cost: f64,
    radius: f64,
    candidates: usize,
    centroids: Vec<Centroid>,
    points: Vec<Point>,
    crops: Vec<CropEntry>,
}

fn sibling_image(map_path: &Path) -> Option<PathBuf> {
    IMAGE_EXTS
        .iter()
        .map(|e| map_path.with_extension(e))
        .find(|p| p.exists())
}

struct LatticeResult {
    regions: Vec<RegionRecord>,
    circles: Vec<RegionRecord>,
}

fn cmd_fit_lattice(
    inputs: &[PathBuf],
    out: &Path,
    c: &PipelineConfig,
    write_crops: bool,
) -> Result<()> {
    let files = collect_inputs(inputs, &["pmap"])?;
    let params = LatticeParams {
        threshold: c.centroid_threshold,
        min_region: c.min_region,
        k: c.k,
        weights: c.weights()?,
        radius: c.render_radius,
    };
    let results: Vec<LatticeResult> = files
        .par_iter()
        .map(|path| {
            let map = load_pmap(path)?;
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("map")
                .to_string();
            let session = session_of(path);
            let image = sibling_image(path).map(load_image).transpose()?;
            let fit = fit_lattice(&map, &params)?;
            let mut crops_out = Vec::new();
            let mut regions = Vec::new();
            let mut canvas = match &image {
                Some(img) => Canvas::from_gray(img),
                None => Canvas::from_map(&map),
            };
            if let Some(img) = &image {
                let crops =
                    lattice_crops(&fit.lattice, img, &map, c.crop_margin, c.prob_threshold)?;
                for (k, crop) in crops.iter().enumerate() {
                    let file = if write_crops {
                        let name = format!("{id}_crops/{k:04}.mrc");
                        save_image(
                            &crop.pixels,
                            out.join(&name),
                            ImageFormat::Mrc(MrcMode::Float32),
                        )?;
                        Some(name)
                    } else {
                        None
                    };
                    let half = crop.side / 2.0;
                    let (x, y) = (crop.center[0], crop.center[1]);
                    canvas.polygon(
                        &[
                            [x - half, y - half],
                            [x + half, y - half],
                            [x + half, y + half],
                            [x - half, y + half],
                        ],
                        overlay::GREEN,
                    );
                    regions.push(RegionRecord {
                        image_id: id.clone(),
                        session_id: session.clone(),
                        region: crop.region(),
                    });
                    crops_out.push(CropEntry {
                        center: crop.center,
                        side: crop.side,
                        prob_sum: crop.prob_sum,
                        origin: crop.origin,
                        file,
                    });
                }
            }
            let circles = centroid_regions(&fit.centroids, c.circle_radius)?
                .into_iter()
                .map(|region| RegionRecord {
                    image_id: id.clone(),
                    session_id: session.clone(),
                    region,
                })
                .collect();
            for cent in &fit.centroids {
                canvas.dot(cent.point(), 2, overlay::RED);
            }
            for p in &fit.lattice.points {
                canvas.cross(*p, 3, overlay::CYAN);
            }
            canvas.dot(fit.lattice.anchor_a, 4, overlay::CYAN);
            canvas.dot(fit.lattice.anchor_b, 4, overlay::CYAN);
            let doc = LatticeOutput {
                version: OUTPUT_VERSION,
                image_id: id.clone(),
                session_id: session,
                anchor_a: fit.lattice.anchor_a,
                anchor_b: fit.lattice.anchor_b,
                spacing: fit.lattice.spacing,
                cost: fit.cost,
                radius: fit.radius,
                candidates: fit.candidates,
                centroids: fit.centroids,
                points: fit.lattice.points,
                crops: crops_out,
            };
            write_atomic(
                &out.join(format!("{id}.lattice.json")),
                &serde_json::to_vec_pretty(&doc)?,
            )?;
            write_atomic(&out.join(format!("{id}.lattice.png")), &canvas.encode()?)?;
            Ok(LatticeResult { regions, circles })
        })
        .collect::<Result<_>>()?;
    let (mut regions, mut circles) = (Vec::new(), Vec::new());
    for r in results {
        regions.extend(r.regions);
        circles.extend(r.circles);
    }
    let mut buf = Vec::new();
    write_regions(&mut buf, &regions)?;
    write_atomic(&out.join("regions.csv"), &buf)?;
    let mut buf = Vec::new();
    write_regions(&mut buf, &circles)?;
    write_atomic(&out.join("centroid_regions.csv"), &buf)?;
    println!(
        "{} maps, {} crops -> {}",
        files.len(),
        regions.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(regions: &Path, selections: &Path, json: Option<&Path>) -> Result<()> {
    let regs = read_regions(std::fs::File::open(regions)?)?;
    let sels: Vec<Selection> = read_selections(std::fs::File::open(selections)?)?;
    let report = evaluate(&regs, &sels)?;
    print!("{}", format_table(&report.summary));
    let s = &report.summary;
    println!(
        "precision {:.3} recall {:.3} f1 {:.3}",
        s.precision, s.recall, s.f1
    );
    if let Some(p) = json {
        write_atomic(p, &serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct FeatureInput {
    session_id: String,
    mean: f64,
    max: f64,
    min: f64,
    variance: f64,
    skew: f64,
    kurtosis: f64,
    area: f64,
    label: Option<u8>,
}

fn cmd_train(features: &Path, out: &Path, kind: ModelKind, c: &PipelineConfig) -> Result<()> {
    let mut rdr = csv::Reader::from_reader(std::fs::File::open(features)?);
    let (mut x, mut y, mut sessions) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.deserialize() {
        let r: FeatureInput = row?;
        let Some(label) = r.label else { continue };
        x.push(vec![
            r.mean, r.max, r.min, r.variance, r.skew, r.kurtosis, r.area,
        ]);
        y.push(label != 0);
        sessions.push(r.session_id);
    }
    if x.is_empty() {
        return Err(Error::Argument("no labeled rows in features file".into()));
    }
    let model = match kind {
        ModelKind::Logreg => Model::Logreg(train_logreg(&x, &y, &LogRegParams::default())?),
        ModelKind::Forest => Model::Forest(train_forest(
            &x,
            &y,
            &ForestParams {
                tree_count: c.trees,
                max_depth: c.max_depth,
                seed: c.seed,
                ..ForestParams::default()
            },
        )?),
    };
    let saved = SavedModel::new(model);
    let mut buf = serde_json::to_vec_pretty(&saved)?;
    buf.push(b'\n');
    write_atomic(out, &buf)?;
    println!(
        "trained on {} rows ({} positive)",
        x.len(),
        y.iter().filter(|&&t| t).count()
    );
    let scores = predict_scores(&saved.model, &x)?;
    if let Ok(auc) = session_mean(roc_auc, &scores, &y, &sessions) {
        println!("training roc_auc (session mean) {auc:.3}");
    }
    if c.importance_repeats > 0 && saved.model.n_features() == FEATURE_NAMES.len() {
        if let Ok(imp) = permutation_importance(
            &saved.model,
            &x,
            &y,
            Metric::RocAuc,
            c.importance_repeats,
            c.seed,
        ) {
            let mut order: Vec<usize> = (0..imp.len()).collect();
            order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]));
            println!("permutation importance (roc_auc drop):");
            for i in order {
                println!("  {:<10} {:.4}", FEATURE_NAMES[i], imp[i]);
            }
        }
    }
    Ok(())
}
