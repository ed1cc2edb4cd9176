use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{LineSegment, Point2};
use crate::grid::GridMesh;

/// A point expressed as a convex combination of its cell's four vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearAnchor {
    pub col: usize,
    pub row: usize,
    /// Vertex indices: top-left, top-right, bottom-left, bottom-right.
    pub vertices: [usize; 4],
    pub weights: [f64; 4],
}

impl BilinearAnchor {
    /// `w^T V` for vertex positions `v`.
    pub fn evaluate(&self, v: &[Point2]) -> Point2 {
        let mut p = Point2::new(0.0, 0.0);
        for k in 0..4 {
            p = p + v[self.vertices[k]] * self.weights[k];
        }
        p
    }
}

/// Anchor of `p` in the regular grid.
pub fn bilinear_anchor(p: Point2, mesh: &GridMesh) -> Result<BilinearAnchor> {
    let c = mesh
        .locate(p)
        .ok_or(Error::OutsideMesh { x: p.x, y: p.y })?;
    let (s, t) = (c.s, c.t);
    Ok(BilinearAnchor {
        col: c.col,
        row: c.row,
        vertices: mesh.cell_vertices(c.col, c.row),
        weights: [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutPoint {
    pub position: Point2,
    pub anchor: BilinearAnchor,
    pub line_index: usize,
}

/// Liang-Barsky clip of `p0 + t (p1 - p0)`, `t in [0, 1]`, to the mesh box.
fn clip(seg: &LineSegment, w: f64, h: f64) -> Option<(f64, f64)> {
    let (p0, p1) = (seg.p0(), seg.p1());
    let d = p1 - p0;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, p0.x), (d.x, w - p0.x), (-d.y, p0.y), (d.y, h - p0.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Splits `seg` at every interior grid line it crosses. The result runs from
/// the clipped `p0` to the clipped `p1`; empty when the segment misses the mesh.
pub fn cut_line_by_grid(seg: &LineSegment, mesh: &GridMesh, line_index: usize) -> Vec<CutPoint> {
    let Some((t0, t1)) = clip(seg, mesh.width(), mesh.height()) else {
        return Vec::new();
    };
    let (p0, p1) = (seg.p0(), seg.p1());
    let d = p1 - p0;
    let mut ts = alloc::vec![t0, t1];
    let mut crossings = |origin: f64, delta: f64, step: f64, count: usize| {
        if delta == 0.0 {
            return;
        }
        for k in 1..count {
            let t = (k as f64 * step - origin) / delta;
            if t > t0 && t < t1 {
                ts.push(t);
            }
        }
    };
    crossings(p0.x, d.x, mesh.cell_w, mesh.cols);
    crossings(p0.y, d.y, mesh.cell_h, mesh.rows);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if t0 == t1 {
        ts = alloc::vec![t0, t1];
    }
    ts.into_iter()
        .filter_map(|t| {
            let p = p0 + d * t;
            // Clipped points can sit a rounding error outside the box.
            let p = Point2::new(p.x.clamp(0.0, mesh.width()), p.y.clamp(0.0, mesh.height()));
            bilinear_anchor(p, mesh).ok().map(|anchor| CutPoint {
                position: p,
                anchor,
                line_index,
            })
        })
        .collect()
}
