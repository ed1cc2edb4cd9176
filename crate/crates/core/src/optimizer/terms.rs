//! Linear least-squares rows of the mesh energy. Unknown `2 v` is the x
//! coordinate of vertex `v`, `2 v + 1` its y coordinate.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use super::anchor::{bilinear_anchor, cut_line_by_grid, BilinearAnchor, CutPoint};
use crate::correspondence::{LineMatch, PointMatch};
use crate::error::{Error, Result};
use crate::geometry::{ImplicitLine, LineSegment, Point2};
use crate::grid::GridMesh;
use crate::raster::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    PointAlign,
    GlobalAlign,
    Smoothness,
    LineCorr,
    Collinearity,
}

/// Sparse rows `a_r . x = b_r` with a term coefficient; the term's energy is
/// `sum_r (a_r . x - b_r)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTerm {
    pub kind: TermKind,
    pub weight: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl EnergyTerm {
    pub fn new(kind: TermKind) -> Self {
        Self {
            kind,
            weight: 1.0,
            row_ptr: alloc::vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        for (c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
        self.rhs.push(rhs);
    }

    pub fn row_count(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64], f64) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b], self.rhs[r])
    }

    pub fn residual(&self, r: usize, x: &[f64]) -> f64 {
        let (cols, vals, rhs) = self.row(r);
        cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum::<f64>() - rhs
    }

    /// Unweighted energy at unknowns `x`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        (0..self.row_count())
            .map(|r| self.residual(r, x).powi(2))
            .sum()
    }
}

pub fn vertices_to_unknowns(v: &[Point2]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub fn unknowns_to_vertices(x: &[f64]) -> Vec<Point2> {
    x.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect()
}

/// Row entries `coef_x * (w^T V)_x + coef_y * (w^T V)_y`.
fn anchor_entries(
    a: &BilinearAnchor,
    coef_x: f64,
    coef_y: f64,
) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..4)
        .flat_map(move |k| {
            let v = a.vertices[k];
            [
                (2 * v, coef_x * a.weights[k]),
                (2 * v + 1, coef_y * a.weights[k]),
            ]
        })
        .filter(|&(_, c)| c != 0.0)
}

/// `E_p`: two rows per match; `p_prime` must already be in the output frame.
/// Returns the term and the number of matches skipped for lying off the mesh.
pub fn build_point_term(points: &[PointMatch], mesh: &GridMesh) -> (EnergyTerm, usize) {
    let mut t = EnergyTerm::new(TermKind::PointAlign);
    let mut skipped = 0;
    for m in points {
        let Ok(a) = bilinear_anchor(m.p, mesh) else {
            skipped += 1;
            continue;
        };
        t.push_row(anchor_entries(&a, 1.0, 0.0), m.p_prime.x);
        t.push_row(anchor_entries(&a, 0.0, 1.0), m.p_prime.y);
    }
    (t, skipped)
}

/// `E_g`: identity rows pulling every vertex to its prewarp position.
pub fn build_global_term(mesh: &GridMesh, prewarp: &[Point2]) -> EnergyTerm {
    debug_assert_eq!(prewarp.len(), mesh.vertex_count());
    let mut t = EnergyTerm::new(TermKind::GlobalAlign);
    for (v, p) in prewarp.iter().enumerate() {
        t.push_row([(2 * v, 1.0)], p.x);
        t.push_row([(2 * v + 1, 1.0)], p.y);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Triangulation {
    /// Every corner against both of its neighbours, in both orders.
    #[default]
    Eight,
    /// One diagonal split: two triangles per quad.
    Two,
}

/// `(mu, nu)` with `v1 = v2 + mu (v3 - v2) + nu R (v3 - v2)`, `R = [0 1; -1 0]`.
pub fn triangle_coords(v1: Point2, v2: Point2, v3: Point2) -> Result<(f64, f64)> {
    let e = v3 - v2;
    let len2 = e.dot(e);
    if !(len2.sqrt() >= 1e-9) {
        return Err(Error::DegenerateTriangle);
    }
    let re = Point2::new(e.y, -e.x);
    let d = v1 - v2;
    Ok((d.dot(e) / len2, d.dot(re) / len2))
}

fn quad_triangles(corners: [usize; 4], mode: Triangulation) -> Vec<[usize; 3]> {
    let [tl, tr, bl, br] = corners;
    match mode {
        Triangulation::Eight => alloc::vec![
            [tl, tr, bl],
            [tl, bl, tr],
            [tr, br, tl],
            [tr, tl, br],
            [br, bl, tr],
            [br, tr, bl],
            [bl, tl, br],
            [bl, br, tl],
        ],
        Triangulation::Two => alloc::vec![[tl, tr, bl], [br, bl, tr]],
    }
}

/// `E_s`: similarity-preserving rows for every triangle, with `(mu, nu)`
/// taken from the prewarp positions. `salience` holds one `phi` per quad.
pub fn build_smoothness_term(
    mesh: &GridMesh,
    prewarp: &[Point2],
    salience: Option<&[f64]>,
    mode: Triangulation,
) -> Result<EnergyTerm> {
    let mut t = EnergyTerm::new(TermKind::Smoothness);
    for row in 0..mesh.rows {
        for col in 0..mesh.cols {
            let phi = salience.map_or(1.0, |s| s[mesh.cell_index(col, row)]);
            let k = phi.sqrt();
            for [i1, i2, i3] in quad_triangles(mesh.cell_vertices(col, row), mode) {
                let (mu, nu) = triangle_coords(prewarp[i1], prewarp[i2], prewarp[i3])?;
                let (x1, y1, x2, y2, x3, y3) =
                    (2 * i1, 2 * i1 + 1, 2 * i2, 2 * i2 + 1, 2 * i3, 2 * i3 + 1);
                // x: V1x - V2x - mu (V3x - V2x) - nu (V3y - V2y)
                t.push_row(
                    [
                        (x1, k),
                        (x2, k * (mu - 1.0)),
                        (x3, -k * mu),
                        (y2, k * nu),
                        (y3, -k * nu),
                    ],
                    0.0,
                );
                // y: V1y - V2y - mu (V3y - V2y) + nu (V3x - V2x)
                t.push_row(
                    [
                        (y1, k),
                        (y2, k * (mu - 1.0)),
                        (y3, -k * mu),
                        (x2, -k * nu),
                        (x3, k * nu),
                    ],
                    0.0,
                );
            }
        }
    }
    Ok(t)
}

/// Per-quad intensity variance of the pixels centered inside each cell,
/// mapped linearly to `[0.5, 2]` (all ones when every quad has the same variance).
pub fn quad_salience(gray: &GrayImage, mesh: &GridMesh) -> Vec<f64> {
    let n = mesh.cell_count();
    let (mut sum, mut sq, mut cnt) = (
        alloc::vec![0.0; n],
        alloc::vec![0.0; n],
        alloc::vec![0usize; n],
    );
    for y in 0..gray.height {
        for x in 0..gray.width {
            let c = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            if !mesh.contains(c) {
                continue;
            }
            let (col, row) = mesh.nearest_cell(c);
            let i = mesh.cell_index(col, row);
            let g = gray.get(x, y);
            sum[i] += g;
            sq[i] += g * g;
            cnt[i] += 1;
        }
    }
    let var: Vec<f64> = (0..n)
        .map(|i| {
            if cnt[i] == 0 {
                0.0
            } else {
                let m = sum[i] / cnt[i] as f64;
                (sq[i] / cnt[i] as f64 - m * m).max(0.0)
            }
        })
        .collect();
    let lo = var.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = var.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12) {
        return alloc::vec![1.0; n];
    }
    var.iter()
        .map(|v| 0.5 + 1.5 * (v - lo) / (hi - lo))
        .collect()
}

/// `E_l`: one row per cut point of each target line, the signed distance of
/// the deformed point to the matched (normalized) line. `l_prime` must be in
/// the output frame. Returns the term and the count of lines missing the mesh.
pub fn build_line_corr_term(lines: &[LineMatch], mesh: &GridMesh) -> (EnergyTerm, usize) {
    build_line_corr_term_framed(lines, None, mesh)
}

/// Partner lines of one line match in the output frame, keyed by the mesh
/// cell of the target-side point. Used when the reference side is moved by a
/// different transform in each cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineFrames {
    /// `(cell index, line)` sorted by cell index.
    pub frames: Vec<(usize, ImplicitLine)>,
}

impl LineFrames {
    pub fn new(mut frames: Vec<(usize, ImplicitLine)>) -> Self {
        frames.sort_by_key(|f| f.0);
        frames.dedup_by_key(|f| f.0);
        LineFrames { frames }
    }

    /// Line for `cell`, or the first frame when the cell has none.
    pub fn line_in(&self, cell: usize) -> Option<ImplicitLine> {
        match self.frames.binary_search_by_key(&cell, |f| f.0) {
            Ok(k) => Some(self.frames[k].1),
            Err(_) => self.frames.first().map(|f| f.1),
        }
    }
}

/// `E_l` with per-cell partner lines; `frames[j]` belongs to `lines[j]`.
/// Lines without a usable frame fall back to their own `l_prime`.
pub fn build_line_corr_term_framed(
    lines: &[LineMatch],
    frames: Option<&[LineFrames]>,
    mesh: &GridMesh,
) -> (EnergyTerm, usize) {
    let mut t = EnergyTerm::new(TermKind::LineCorr);
    let mut skipped = 0;
    for (j, m) in lines.iter().enumerate() {
        let cuts = cut_line_by_grid(&m.l, mesh, j);
        if cuts.is_empty() {
            skipped += 1;
            continue;
        }
        let own = *m.l_prime.line();
        for c in &cuts {
            let cell = mesh.cell_index(c.anchor.col, c.anchor.row);
            let l = frames
                .and_then(|f| f.get(j))
                .and_then(|f| f.line_in(cell))
                .unwrap_or(own);
            t.push_row(anchor_entries(&c.anchor, l.a, l.b), -l.c);
        }
    }
    (t, skipped)
}

/// A target line prepared for `E_c`: its cut points and the fixed line `l_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollinearLine {
    pub cuts: Vec<CutPoint>,
    pub l_hat: ImplicitLine,
}

impl CollinearLine {
    /// Sum of squared distances of the interior deformed cut points to `l`.
    pub fn interior_energy(&self, l: &ImplicitLine, vertices: &[Point2]) -> f64 {
        let n = self.cuts.len();
        self.cuts[1..n - 1]
            .iter()
            .map(|c| l.signed_distance(c.anchor.evaluate(vertices)).powi(2))
            .sum()
    }

    /// The line through the deformed head and tail cut points.
    pub fn head_tail_line(&self, vertices: &[Point2]) -> Option<ImplicitLine> {
        let head = self.cuts[0].anchor.evaluate(vertices);
        let tail = self.cuts[self.cuts.len() - 1].anchor.evaluate(vertices);
        ImplicitLine::through(head, tail).ok()
    }

    /// Total least-squares line through all deformed cut points.
    pub fn fitted_line(&self, vertices: &[Point2]) -> Option<ImplicitLine> {
        let pts: Vec<Point2> = self
            .cuts
            .iter()
            .map(|c| c.anchor.evaluate(vertices))
            .collect();
        let n = pts.len() as f64;
        let c = pts.iter().fold(Point2::new(0.0, 0.0), |a, &p| a + p) * (1.0 / n);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &pts {
            let d = *p - c;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (s, co) = angle.sin_cos();
        ImplicitLine::through(c, c + Point2::new(co, s)).ok()
    }
}

/// Cuts each target line and fixes `l_hat` from the head and tail cut points
/// mapped through `positions`. Lines with fewer than three cut points carry no
/// interior constraint and are dropped.
pub fn prepare_collinear_lines(
    lines: &[LineSegment],
    mesh: &GridMesh,
    positions: &[Point2],
) -> Vec<CollinearLine> {
    lines
        .iter()
        .enumerate()
        .filter_map(|(i, seg)| {
            let cuts = cut_line_by_grid(seg, mesh, i);
            if cuts.len() < 3 {
                return None;
            }
            let mut line = CollinearLine {
                cuts,
                l_hat: ImplicitLine::from_coeffs(1.0, 0.0, 0.0).ok()?,
            };
            line.l_hat = line.head_tail_line(positions)?;
            Some(line)
        })
        .collect()
}

/// `E_c` rows for prepared lines: one per interior cut point.
pub fn collinearity_term(lines: &[CollinearLine]) -> EnergyTerm {
    let mut t = EnergyTerm::new(TermKind::Collinearity);
    for line in lines {
        let l = &line.l_hat;
        for c in &line.cuts[1..line.cuts.len() - 1] {
            t.push_row(anchor_entries(&c.anchor, l.a, l.b), -l.c);
        }
    }
    t
}

/// `E_c` with `l_hat` taken from the prewarp head/tail points.
pub fn build_collinearity_term(
    lines: &[LineSegment],
    mesh: &GridMesh,
    prewarp: &[Point2],
) -> EnergyTerm {
    collinearity_term(&prepare_collinear_lines(lines, mesh, prewarp))
}
