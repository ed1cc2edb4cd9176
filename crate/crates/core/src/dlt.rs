//! Joint point + line homography estimation by direct linear transformation.
//!
//! Each point match contributes the two independent rows of `p' x H p = 0`.
//! Each line match contributes one incidence row `l'^T H p = 0` per endpoint of
//! the target segment. Rows are built from normalized coordinates on both
//! sides; the estimate is the right singular vector of the stacked matrix
//! with the smallest singular value, mapped back through the normalizations.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::{CorrespondenceSet, LineMatch, PointMatch};
use crate::error::{Error, Result};
use crate::geometry::{normalize_correspondences, Homography, ImplicitLine, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Point,
    Line,
}

/// The 2x9 coefficient block of one correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRows {
    pub rows: [[f64; 9]; 2],
    pub kind: ConstraintKind,
    pub source_index: usize,
}

impl ConstraintRows {
    /// Algebraic residuals `rows * h` for a row-major vectorized homography.
    pub fn residuals(&self, h: &[f64; 9]) -> [f64; 2] {
        let dot = |r: &[f64; 9]| r.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        [dot(&self.rows[0]), dot(&self.rows[1])]
    }
}

/// Cross-product rows for `p' = H p`.
pub fn point_rows(p: Point2, p_prime: Point2, source_index: usize) -> ConstraintRows {
    let (x, y) = (p.x, p.y);
    let (xp, yp) = (p_prime.x, p_prime.y);
    ConstraintRows {
        rows: [
            [0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp],
            [x, y, 1.0, 0.0, 0.0, 0.0, -xp * x, -xp * y, -xp],
        ],
        kind: ConstraintKind::Point,
        source_index,
    }
}

/// Incidence rows `l'^T H p = 0`, one per target endpoint.
pub fn line_rows(
    endpoints: [Point2; 2],
    l_prime: &ImplicitLine,
    source_index: usize,
) -> ConstraintRows {
    let (a, b, c) = (l_prime.a, l_prime.b, l_prime.c);
    let row = |p: Point2| {
        [
            a * p.x,
            a * p.y,
            a,
            b * p.x,
            b * p.y,
            b,
            c * p.x,
            c * p.y,
            c,
        ]
    };
    ConstraintRows {
        rows: [row(endpoints[0]), row(endpoints[1])],
        kind: ConstraintKind::Line,
        source_index,
    }
}

pub fn point_match_rows(m: &PointMatch, source_index: usize) -> ConstraintRows {
    point_rows(m.p, m.p_prime, source_index)
}

pub fn line_match_rows(m: &LineMatch, source_index: usize) -> ConstraintRows {
    line_rows([m.l.p0(), m.l.p1()], m.l_prime.line(), source_index)
}

/// Stacked normalized system `C = [A; B]` with its normalizing transforms.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    /// `(2M + 2K) x 9`; point rows first, then line rows.
    pub c: DMatrix<f64>,
    pub row_kinds: Vec<ConstraintKind>,
    pub row_sources: Vec<usize>,
    /// Target-side normalization `T`.
    pub target_norm: Homography,
    /// Reference-side normalization `T'`.
    pub reference_norm: Homography,
}

impl StackedSystem {
    pub fn rows(&self) -> usize {
        self.c.nrows()
    }

    /// Maps a normalized-space solution back to image coordinates: `T'^-1 H T`.
    pub fn denormalize(&self, h_norm: &Homography) -> Result<Homography> {
        Ok(self
            .reference_norm
            .inverse()?
            .compose(h_norm)
            .compose(&self.target_norm))
    }
}

/// Builds the normalized stacked matrix. Line rows are scaled by `line_weight`.
pub fn stack_system(set: &CorrespondenceSet, line_weight: f64) -> Result<StackedSystem> {
    let rows = set.constraint_rows();
    if rows < 8 {
        return Err(Error::RankDeficient { rows });
    }
    let target_pts: Vec<Point2> = set.points.iter().map(|m| m.p).collect();
    let target_ends: Vec<Point2> = set
        .lines
        .iter()
        .flat_map(|m| [m.l.p0(), m.l.p1()])
        .collect();
    let ref_pts: Vec<Point2> = set.points.iter().map(|m| m.p_prime).collect();
    let ref_ends: Vec<Point2> = set
        .lines
        .iter()
        .flat_map(|m| [m.l_prime.p0(), m.l_prime.p1()])
        .collect();
    let tn = normalize_correspondences(&target_pts, &target_ends)?;
    let rn = normalize_correspondences(&ref_pts, &ref_ends)?;

    let mut c = DMatrix::zeros(rows, 9);
    let mut row_kinds = Vec::with_capacity(rows);
    let mut row_sources = Vec::with_capacity(rows);
    let mut put = |r: usize, block: &ConstraintRows, scale: f64| {
        for k in 0..2 {
            for j in 0..9 {
                c[(r + k, j)] = scale * block.rows[k][j];
            }
            row_kinds.push(block.kind);
            row_sources.push(block.source_index);
        }
    };
    for (i, (p, pp)) in tn.points.iter().zip(&rn.points).enumerate() {
        put(2 * i, &point_rows(*p, *pp, i), 1.0);
    }
    let base = 2 * set.points.len();
    for (j, m) in set.lines.iter().enumerate() {
        let l_norm = m.l_prime.line().transformed(&rn.transform)?;
        let ends = [tn.line_endpoints[2 * j], tn.line_endpoints[2 * j + 1]];
        put(base + 2 * j, &line_rows(ends, &l_norm, j), line_weight);
    }
    Ok(StackedSystem {
        c,
        row_kinds,
        row_sources,
        target_norm: tn.transform,
        reference_norm: rn.transform,
    })
}

/// Unit vector minimizing `||C h||`, via a full SVD of `C` (zero-padded to at
/// least nine rows so the null direction is represented).
pub fn smallest_right_singular_vector(c: &DMatrix<f64>) -> Result<[f64; 9]> {
    let padded;
    let m = if c.nrows() < 9 {
        padded = {
            let mut p = DMatrix::zeros(9, 9);
            p.view_mut((0, 0), (c.nrows(), 9)).copy_from(c);
            p
        };
        &padded
    } else {
        c
    };
    let svd = m.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverFailure(alloc::string::String::from("SVD did not converge")))?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let (smallest, second) = (s[order[0]], s[order[1]]);
    let largest = s[order[s.len() - 1]];
    if !(largest > 0.0) {
        return Err(Error::DegenerateSeparation(0.0));
    }
    let separation = (second - smallest) / largest;
    if !(separation > 1e-10) {
        return Err(Error::DegenerateSeparation(separation));
    }
    let row = v_t.row(order[0]);
    let mut h = [0.0; 9];
    for (k, v) in h.iter_mut().enumerate() {
        *v = row[k];
    }
    Ok(h)
}

/// Global homography from all point and line matches of `set`.
pub fn estimate_global_homography(set: &CorrespondenceSet) -> Result<Homography> {
    estimate_global_homography_weighted(set, 1.0)
}

/// As [`estimate_global_homography`] with line rows scaled by `line_weight`.
pub fn estimate_global_homography_weighted(
    set: &CorrespondenceSet,
    line_weight: f64,
) -> Result<Homography> {
    let sys = stack_system(set, line_weight)?;
    let h = smallest_right_singular_vector(&sys.c)?;
    sys.denormalize(&Homography::from_vec(&h))
}

/// Points-only DLT (used for minimal RANSAC samples).
pub fn estimate_points_homography(points: &[PointMatch]) -> Result<Homography> {
    let set = CorrespondenceSet {
        points: points.to_vec(),
        ..CorrespondenceSet::default()
    };
    estimate_global_homography(&set)
}

/// `sqrt(|H p - p'|^2 + |H^-1 p' - p|^2)`; infinite when either side maps to infinity.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, m: &PointMatch) -> f64 {
    match (h.apply(m.p), h_inv.apply(m.p_prime)) {
        (Ok(f), Ok(b)) => {
            let (ef, eb) = (f.distance(m.p_prime), b.distance(m.p));
            (ef * ef + eb * eb).sqrt()
        }
        _ => f64::INFINITY,
    }
}
