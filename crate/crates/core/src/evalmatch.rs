//! One-to-one matching of predicted collection regions against operator
//! selections, and per-session aggregation.
//!
//! A selection is a true positive when at least one region contains it and
//! no other selection. Regions holding zero or several selections are false
//! positives. Every selection that is not a true positive is a false
//! negative. Overlapping regions are resolved per selection: a selection
//! inside two single-selection regions is counted once.
//!
//! Containment is closed: points on a region boundary are inside.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::squares::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned square.
    Square {
        center: Point,
        side: f64,
    },
    Circle {
        center: Point,
        radius: f64,
    },
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Square { center, side } => {
                (p[0] - center[0]).abs() <= 0.5 * side && (p[1] - center[1]).abs() <= 0.5 * side
            }
            Shape::Circle { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Shape::Square { center, .. } | Shape::Circle { center, .. } => center,
        }
    }

    /// Side for squares, radius for circles.
    pub fn extent(&self) -> f64 {
        match *self {
            Shape::Square { side, .. } => side,
            Shape::Circle { radius, .. } => radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    LatticeCrop,
    CentroidCircle,
    /// Circle around a detected low-mag square center.
    DetectedSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    pub source: RegionSource,
}

impl Region {
    pub fn new(shape: Shape, source: RegionSource) -> Result<Self> {
        let e = shape.extent();
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Geometry(format!(
                "region extent must be positive, got {e}"
            )));
        }
        Ok(Self { shape, source })
    }

    pub fn contains(&self, p: Point) -> bool {
        self.shape.contains(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub image_id: String,
    pub session_id: String,
    pub x: f64,
    pub y: f64,
}

impl Selection {
    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Matches regions against selections on a single image.
pub fn match_regions(regions: &[Region], sels: &[Point]) -> MatchReport {
    let mut single = vec![false; sels.len()];
    let mut fp = 0;
    for r in regions {
        let inside: Vec<usize> = (0..sels.len()).filter(|&i| r.contains(sels[i])).collect();
        if inside.len() == 1 {
            single[inside[0]] = true;
        } else {
            fp += 1;
        }
    }
    let tp = single.iter().filter(|&&s| s).count();
    MatchReport::from_counts(tp, fp, sels.len() - tp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    /// Per-session totals, sorted by session id.
    pub sessions: Vec<(String, MatchReport)>,
    /// Unweighted means over sessions.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Sums counts within each session, then averages per-session metrics with
/// equal weight.
pub fn aggregate_sessions(reports: &[(String, MatchReport)]) -> Result<SessionSummary> {
    if reports.is_empty() {
        return Err(Error::arg("no reports to aggregate"));
    }
    let mut totals: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (id, r) in reports {
        let t = totals.entry(id.as_str()).or_default();
        t.0 += r.tp;
        t.1 += r.fp;
        t.2 += r.fn_;
    }
    let sessions: Vec<(String, MatchReport)> = totals
        .into_iter()
        .map(|(id, (tp, fp, fn_))| (id.to_string(), MatchReport::from_counts(tp, fp, fn_)))
        .collect();
    let n = sessions.len() as f64;
    let mean = |f: fn(&MatchReport) -> f64| sessions.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    Ok(SessionSummary {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        sessions,
    })
}

/// A region tagged with the image it was predicted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub image_id: String,
    pub session_id: String,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub session_id: String,
    pub report: MatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub images: Vec<ImageReport>,
    pub summary: SessionSummary,
}

pub const EVAL_REPORT_VERSION: u32 = 1;

/// Matches every image appearing in either input and aggregates by session.
///
/// An image's session comes from its selections or, failing that, from its
/// regions.
pub fn evaluate(regions: &[RegionRecord], sels: &[Selection]) -> Result<EvalReport> {
    let mut by_image: BTreeMap<&str, (String, Vec<Region>, Vec<Point>)> = BTreeMap::new();
    for r in regions {
        by_image
            .entry(&r.image_id)
            .or_insert_with(|| (r.session_id.clone(), Vec::new(), Vec::new()))
            .1
            .push(r.region);
    }
    for s in sels {
        let e = by_image
            .entry(&s.image_id)
            .or_insert_with(|| (s.session_id.clone(), Vec::new(), Vec::new()));
        e.0 = s.session_id.clone();
        e.2.push(s.point());
    }
    if by_image.is_empty() {
        return Err(Error::arg("no regions or selections to evaluate"));
    }
    let images: Vec<ImageReport> = by_image
        .into_iter()
        .map(|(id, (session, regs, pts))| ImageReport {
            image_id: id.to_string(),
            session_id: session,
            report: match_regions(&regs, &pts),
        })
        .collect();
    let pairs: Vec<(String, MatchReport)> = images
        .iter()
        .map(|r| (r.session_id.clone(), r.report))
        .collect();
    Ok(EvalReport {
        version: EVAL_REPORT_VERSION,
        summary: aggregate_sessions(&pairs)?,
        images,
    })
}

/// Plain-text table with one row per session and a mean row.
pub fn format_table(summary: &SessionSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>6} {:>6} {:>6} {:>9} {:>7} {:>7}",
        "session", "tp", "fp", "fn", "precision", "recall", "f1"
    );
    for (id, r) in &summary.sessions {
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>6} {:>6} {:>9.3} {:>7.3} {:>7.3}",
            id, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
        );
    }
    let _ = writeln!(
        s,
        "{:<16} {:>6} {:>6} {:>6} {:>9.3} {:>7.3} {:>7.3}",
        format!("mean ({})", summary.sessions.len()),
        "",
        "",
        "",
        summary.precision,
        summary.recall,
        summary.f1
    );
    s
}

/// Reads `image_id,session_id,x,y` rows.
pub fn read_selections<R: Read>(r: R) -> Result<Vec<Selection>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let s: Selection = row?;
        if !(s.x.is_finite() && s.y.is_finite()) {
            return Err(Error::Corrupt(format!(
                "non-finite selection in {}",
                s.image_id
            )));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_selections<W: Write>(w: W, sels: &[Selection]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in sels {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionRow {
    image_id: String,
    session_id: String,
    source: RegionSource,
    shape: String,
    cx: f64,
    cy: f64,
    /// Side for squares, radius for circles.
    extent: f64,
}

/// Reads `image_id,session_id,source,shape,cx,cy,extent` rows, where
/// `shape` is `square` or `circle`.
pub fn read_regions<R: Read>(r: R) -> Result<Vec<RegionRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: RegionRow = row?;
        let center = [row.cx, row.cy];
        let shape = match row.shape.as_str() {
            "square" => Shape::Square {
                center,
                side: row.extent,
            },
            "circle" => Shape::Circle {
                center,
                radius: row.extent,
            },
            other => return Err(Error::Corrupt(format!("unknown region shape {other:?}"))),
        };
        out.push(RegionRecord {
            image_id: row.image_id,
            session_id: row.session_id,
            region: Region::new(shape, row.source)?,
        });
    }
    Ok(out)
}

pub fn write_regions<W: Write>(w: W, regions: &[RegionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in regions {
        let c = r.region.shape.center();
        wtr.serialize(RegionRow {
            image_id: r.image_id.clone(),
            session_id: r.session_id.clone(),
            source: r.region.source,
            shape: match r.region.shape {
                Shape::Square { .. } => "square".into(),
                Shape::Circle { .. } => "circle".into(),
            },
            cx: c[0],
            cy: c[1],
            extent: r.region.shape.extent(),
        })?;
    }
    wtr.flush()?;
    Ok(())
}
