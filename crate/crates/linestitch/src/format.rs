//! JSON documents: correspondence files, scene specs and metric reports.
//!
//! Correspondence coordinates are written with six fractional digits, so a
//! set loaded from a file survives a save/load cycle bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use linestitch_core::correspondence::{CorrespondenceSet, ImageSize, LineMatch, PointMatch};
use linestitch_core::geometry::{Homography, LineSegment, Point2};
use linestitch_core::metrics::MetricReport;
use linestitch_core::synth::{Plane, SceneSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};

#[derive(Debug, Deserialize)]
struct RawCorrespondences {
    target_size: [u32; 2],
    reference_size: [u32; 2],
    points: Vec<Vec<f64>>,
    lines: Vec<Vec<f64>>,
}

fn row<const N: usize>(field: &str, index: usize, values: &[f64]) -> Result<[f64; N], FormatError> {
    <[f64; N]>::try_from(values).map_err(|_| {
        FormatError::record(
            format!("{field}[{index}]"),
            format!("expected {N} numbers, got {}", values.len()),
        )
    })
}

fn segment(
    field: &str,
    index: usize,
    side: &str,
    a: Point2,
    b: Point2,
) -> Result<LineSegment, FormatError> {
    LineSegment::new(a, b).map_err(|e| {
        FormatError::record(format!("{field}[{index}]"), format!("{side} segment: {e}"))
    })
}

/// Parses a correspondence document. Record invariants (sanity bounds) are
/// checked by [`CorrespondenceSet::validate`], which [`load_correspondences`]
/// runs afterwards.
pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet, FormatError> {
    let raw: RawCorrespondences = serde_json::from_str(text)?;
    let mut points = Vec::with_capacity(raw.points.len());
    for (i, r) in raw.points.iter().enumerate() {
        let [x, y, xp, yp] = row::<4>("points", i, r)?;
        points.push(PointMatch::new(Point2::new(x, y), Point2::new(xp, yp)));
    }
    let mut lines = Vec::with_capacity(raw.lines.len());
    for (i, r) in raw.lines.iter().enumerate() {
        let [x0, y0, x1, y1, xp0, yp0, xp1, yp1] = row::<8>("lines", i, r)?;
        let l = segment(
            "lines",
            i,
            "target",
            Point2::new(x0, y0),
            Point2::new(x1, y1),
        )?;
        let lp = segment(
            "lines",
            i,
            "reference",
            Point2::new(xp0, yp0),
            Point2::new(xp1, yp1),
        )?;
        lines.push(LineMatch::new(l, lp));
    }
    let size = |s: [u32; 2]| ImageSize::new(s[0], s[1]);
    Ok(CorrespondenceSet::new(
        points,
        lines,
        size(raw.target_size),
        size(raw.reference_size),
    ))
}

fn push_row(out: &mut String, values: &[f64], last: bool) {
    out.push_str("    [");
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{v:.6}");
    }
    out.push_str(if last { "]\n" } else { "],\n" });
}

/// Serializes `set` with six fractional digits per coordinate.
pub fn format_correspondences(set: &CorrespondenceSet) -> Result<String, FormatError> {
    let finite = set
        .points
        .iter()
        .all(|m| m.p.is_finite() && m.p_prime.is_finite())
        && set.lines.iter().all(|m| {
            [m.l.p0(), m.l.p1(), m.l_prime.p0(), m.l_prime.p1()]
                .iter()
                .all(|p| p.is_finite())
        });
    if !finite {
        return Err(FormatError::NonFinite("correspondences".into()));
    }
    let mut out = String::new();
    let (t, r) = (set.target_size, set.reference_size);
    let _ = writeln!(out, "{{\n  \"target_size\": [{}, {}],", t.width, t.height);
    let _ = writeln!(out, "  \"reference_size\": [{}, {}],", r.width, r.height);
    out.push_str("  \"points\": [\n");
    for (i, m) in set.points.iter().enumerate() {
        push_row(
            &mut out,
            &[m.p.x, m.p.y, m.p_prime.x, m.p_prime.y],
            i + 1 == set.points.len(),
        );
    }
    out.push_str("  ],\n  \"lines\": [\n");
    for (i, m) in set.lines.iter().enumerate() {
        let (a, b, c, d) = (m.l.p0(), m.l.p1(), m.l_prime.p0(), m.l_prime.p1());
        push_row(
            &mut out,
            &[a.x, a.y, b.x, b.y, c.x, c.y, d.x, d.y],
            i + 1 == set.lines.len(),
        );
    }
    out.push_str("  ]\n}\n");
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_correspondences(path: &Path) -> Result<CorrespondenceSet> {
    let set = parse_correspondences(&read(path)?).map_err(|e| Error::format(path, e))?;
    set.validate()?;
    Ok(set)
}

pub fn save_correspondences(path: &Path, set: &CorrespondenceSet) -> Result<()> {
    write(
        path,
        &format_correspondences(set).map_err(|e| Error::format(path, e))?,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPlane {
    homography: [[f64; 3]; 3],
    region: Vec<[f64; 2]>,
}

/// Scene spec in the correspondence dialect: image sizes as `[w, h]`,
/// positions as number arrays.
#[derive(Debug, Serialize, Deserialize)]
struct RawScene {
    target_size: [u32; 2],
    reference_size: [u32; 2],
    seed: u64,
    planes: Vec<RawPlane>,
    n_points: usize,
    n_lines: usize,
    noise_sigma: f64,
    #[serde(default)]
    outlier_fraction: f64,
}

pub(crate) fn matrix_rows(h: &Homography) -> [[f64; 3]; 3] {
    let m = h.matrix();
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

pub fn parse_scene(text: &str) -> Result<SceneSpec, FormatError> {
    let raw: RawScene = serde_json::from_str(text)?;
    let planes = raw
        .planes
        .iter()
        .map(|p| Plane {
            homography: Homography::from_rows(p.homography),
            region: p.region.iter().map(|&[x, y]| Point2::new(x, y)).collect(),
        })
        .collect();
    Ok(SceneSpec {
        seed: raw.seed,
        planes,
        n_points: raw.n_points,
        n_lines: raw.n_lines,
        noise_sigma: raw.noise_sigma,
        outlier_fraction: raw.outlier_fraction,
        target_size: ImageSize::new(raw.target_size[0], raw.target_size[1]),
        reference_size: ImageSize::new(raw.reference_size[0], raw.reference_size[1]),
    })
}

pub fn format_scene(spec: &SceneSpec) -> Result<String, FormatError> {
    let raw = RawScene {
        target_size: [spec.target_size.width, spec.target_size.height],
        reference_size: [spec.reference_size.width, spec.reference_size.height],
        seed: spec.seed,
        planes: spec
            .planes
            .iter()
            .map(|p| RawPlane {
                homography: matrix_rows(&p.homography),
                region: p.region.iter().map(|q| [q.x, q.y]).collect(),
            })
            .collect(),
        n_points: spec.n_points,
        n_lines: spec.n_lines,
        noise_sigma: spec.noise_sigma,
        outlier_fraction: spec.outlier_fraction,
    };
    let finite = raw.planes.iter().all(|p| {
        p.homography.iter().flatten().all(|v| v.is_finite())
            && p.region.iter().flatten().all(|v| v.is_finite())
    });
    if !finite || !raw.noise_sigma.is_finite() || !raw.outlier_fraction.is_finite() {
        return Err(FormatError::NonFinite("scene".into()));
    }
    Ok(serde_json::to_string_pretty(&raw)? + "\n")
}

pub fn load_scene(path: &Path) -> Result<SceneSpec> {
    let spec = parse_scene(&read(path)?).map_err(|e| Error::format(path, e))?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_scene(path: &Path, spec: &SceneSpec) -> Result<()> {
    write(
        path,
        &format_scene(spec).map_err(|e| Error::format(path, e))?,
    )
}

/// The metric report document. `cor` is `null` when the overlap is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub cor: Option<f64>,
    pub err_p: f64,
    pub err_l: f64,
    pub err_mg: f64,
    pub n_overlap: usize,
    pub m_points: usize,
    pub k_lines: usize,
}

impl From<&MetricReport> for ReportDoc {
    fn from(r: &MetricReport) -> Self {
        ReportDoc {
            cor: r.cor.is_finite().then_some(r.cor),
            err_p: r.err_p,
            err_l: r.err_l,
            err_mg: r.err_mg,
            n_overlap: r.n_overlap,
            m_points: r.m_points,
            k_lines: r.k_lines,
        }
    }
}

pub fn format_report(report: &MetricReport) -> String {
    serde_json::to_string_pretty(&ReportDoc::from(report)).expect("report serializes") + "\n"
}

/// Writes any serializable document as pretty JSON.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.into()))?;
    write(path, &(text + "\n"))
}
