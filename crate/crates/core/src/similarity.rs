//! Global similarity constraint: pick the point group whose similarity has the
//! smallest rotation, then blend it into the per-cell homographies with weights
//! that grow along the projective axis away from the overlap.

use alloc::vec::Vec;

use nalgebra::Matrix3;
#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::PointMatch;
use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, SimilarityTransform};
use crate::grid::GridMesh;
use crate::moving_dlt::LocalWarpField;
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCandidate {
    pub transform: SimilarityTransform,
    /// Indices into the matches passed to [`select_similarity`], ascending.
    pub inlier_indices: Vec<usize>,
    pub rotation_angle_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    pub threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            iterations: 1000,
            seed: 0,
        }
    }
}

/// Least-squares similarity `p' ~ s R(theta) p + t`.
pub fn estimate_similarity(matches: &[PointMatch]) -> Result<SimilarityTransform> {
    if matches.len() < 2 {
        return Err(Error::InsufficientMatches {
            needed: 2,
            got: matches.len(),
        });
    }
    let n = matches.len() as f64;
    let (mut c, mut cp) = (Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
    for m in matches {
        c = c + m.p;
        cp = cp + m.p_prime;
    }
    let (c, cp) = (c * (1.0 / n), cp * (1.0 / n));
    let (mut num_a, mut num_b, mut den) = (0.0, 0.0, 0.0);
    for m in matches {
        let (d, dp) = (m.p - c, m.p_prime - cp);
        num_a += d.x * dp.x + d.y * dp.y;
        num_b += d.x * dp.y - d.y * dp.x;
        den += d.x * d.x + d.y * d.y;
    }
    let spread = matches.iter().map(|m| m.p.norm()).fold(1.0, f64::max);
    if !(den > 1e-18 * spread * spread * n) {
        return Err(Error::DegenerateConfiguration("all target points coincide"));
    }
    let (a, b) = (num_a / den, num_b / den);
    Ok(SimilarityTransform {
        scale: a.hypot(b),
        theta: b.atan2(a),
        tx: cp.x - (a * c.x - b * c.y),
        ty: cp.y - (b * c.x + a * c.y),
    })
}

/// Iteratively segments `matches` into similarity groups with RANSAC and
/// returns the group with the smallest absolute rotation.
///
/// After the first group, a group is only kept if it has at least as many
/// inliers as the stopping size `max(10, 5% of M)`; smaller leftovers are
/// chance alignments of outliers.
pub fn select_similarity(
    matches: &[PointMatch],
    params: &SimilarityParams,
) -> Result<SimilarityCandidate> {
    if matches.len() < 2 {
        return Err(Error::NoSimilarityGroup);
    }
    let stop = 10usize.max((0.05 * matches.len() as f64).ceil() as usize);
    let mut remaining: Vec<usize> = (0..matches.len()).collect();
    let mut groups: Vec<SimilarityCandidate> = Vec::new();
    let mut round = 0u64;
    while let Some(found) = similarity_ransac(matches, &remaining, params, round) {
        if !groups.is_empty() && found.inlier_indices.len() < stop {
            break;
        }
        remaining.retain(|i| found.inlier_indices.binary_search(i).is_err());
        groups.push(found);
        round += 1;
        if remaining.len() < stop.max(2) {
            break;
        }
    }
    groups
        .into_iter()
        .min_by(|a, b| a.rotation_angle_abs.total_cmp(&b.rotation_angle_abs))
        .ok_or(Error::NoSimilarityGroup)
}

fn similarity_ransac(
    matches: &[PointMatch],
    pool: &[usize],
    params: &SimilarityParams,
    round: u64,
) -> Option<SimilarityCandidate> {
    if pool.len() < 2 {
        return None;
    }
    let mut rng = CounterRng::new(params.seed, 0x5349_4d00 + round);
    let mut scratch = Vec::new();
    let mut best: Option<(usize, f64, SimilarityTransform)> = None;
    let score = |s: &SimilarityTransform| {
        let mut count = 0;
        let mut cost = 0.0;
        for &i in pool {
            let e = s.apply(matches[i].p).distance(matches[i].p_prime);
            if e < params.threshold {
                count += 1;
                cost += e;
            } else {
                cost += params.threshold;
            }
        }
        (count, cost)
    };
    for _ in 0..params.iterations.max(1) {
        rng.distinct(pool.len(), 2, &mut scratch);
        let sample = [matches[pool[scratch[0]]], matches[pool[scratch[1]]]];
        let Ok(s) = estimate_similarity(&sample) else {
            continue;
        };
        let (count, cost) = score(&s);
        if best
            .as_ref()
            .is_none_or(|(c, k, _)| count > *c || (count == *c && cost < *k))
        {
            best = Some((count, cost, s));
        }
    }
    let (count, _, model) = best?;
    if count < 2 {
        return None;
    }
    let inliers_of = |s: &SimilarityTransform| -> Vec<usize> {
        let mut v: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| s.apply(matches[i].p).distance(matches[i].p_prime) < params.threshold)
            .collect();
        v.sort_unstable();
        v
    };
    let mut inliers = inliers_of(&model);
    let mut transform = model;
    // Refit on the consensus set; keep the refit only if it does not lose support.
    let subset: Vec<PointMatch> = inliers.iter().map(|&i| matches[i]).collect();
    if let Ok(refit) = estimate_similarity(&subset) {
        let refit_inliers = inliers_of(&refit);
        if refit_inliers.len() >= inliers.len() {
            transform = refit;
            inliers = refit_inliers;
        }
    }
    Some(SimilarityCandidate {
        transform,
        rotation_angle_abs: transform.theta.abs(),
        inlier_indices: inliers,
    })
}

/// Direction of the projective axis, `atan2(h8, h7)`; zero for affine maps.
pub fn rotation_angle(h: &Homography) -> f64 {
    let r = h.to_rows();
    let (h7, h8) = (r[2][0], r[2][1]);
    if h7.hypot(h8) < 1e-12 {
        0.0
    } else {
        h8.atan2(h7)
    }
}

/// `Q = H R = Q_a Q_p` with `R` rotating by `theta + pi`, so the bottom row of
/// `Q` is `(-c, 0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveDecomposition {
    pub theta: f64,
    pub c: f64,
    pub rotation: Matrix3<f64>,
    pub affine: Matrix3<f64>,
    pub projective: Matrix3<f64>,
}

impl ProjectiveDecomposition {
    pub fn new(h: &Homography) -> Self {
        let theta = rotation_angle(h);
        let r = h.to_rows();
        let c = r[2][0].hypot(r[2][1]);
        let (s, co) = (theta + core::f64::consts::PI).sin_cos();
        let rotation = Matrix3::new(co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0);
        let q = h.matrix() * rotation;
        let affine = Matrix3::new(
            q[(0, 0)] + c * q[(0, 2)],
            q[(0, 1)],
            q[(0, 2)],
            q[(1, 0)] + c * q[(1, 2)],
            q[(1, 1)],
            q[(1, 2)],
            0.0,
            0.0,
            1.0,
        );
        let projective = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -c, 0.0, 1.0);
        Self {
            theta,
            c,
            rotation,
            affine,
            projective,
        }
    }

    /// `lambda_a = det(Q_a)`.
    pub fn affine_scale(&self) -> f64 {
        self.affine.determinant()
    }

    /// Coordinate of `p` along the rotated `u` axis.
    pub fn u_of(&self, p: Point2) -> f64 {
        let (s, c) = self.theta.sin_cos();
        -(p.x * c + p.y * s)
    }
}

/// Jacobian determinant of `H` at rotated coordinate `u`: `lambda_a / (1 - c u)^3`.
pub fn local_scale_change(h: &Homography, u: f64) -> Result<f64> {
    let d = ProjectiveDecomposition::new(h);
    let w = 1.0 - d.c * u;
    if !(w > 1e-9) {
        return Err(Error::BeyondHorizon(w));
    }
    Ok(d.affine_scale() / (w * w * w))
}

/// [`local_scale_change`] at an image point.
pub fn local_scale_change_at(h: &Homography, p: Point2) -> Result<f64> {
    let d = ProjectiveDecomposition::new(h);
    local_scale_change(h, d.u_of(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    pub cols: usize,
    pub rows: usize,
    pub tau: Vec<f64>,
    pub xi: Vec<f64>,
    /// Unit axis the weights vary along.
    pub axis: Point2,
    /// Per-cell projection onto `axis`, relative to `origin`.
    pub projections: Vec<f64>,
    pub origin: Point2,
    /// Projection where the ramp starts and its length; a zero extent means
    /// every cell shares one weight.
    pub d_start: f64,
    pub extent: f64,
}

impl BlendWeights {
    pub fn uniform(cols: usize, rows: usize, xi: f64) -> Self {
        let n = cols * rows;
        Self {
            cols,
            rows,
            tau: alloc::vec![1.0 - xi; n],
            xi: alloc::vec![xi; n],
            axis: Point2::new(1.0, 0.0),
            projections: alloc::vec![0.0; n],
            origin: Point2::new(0.0, 0.0),
            d_start: 0.0,
            extent: 0.0,
        }
    }

    /// The ramp evaluated at an arbitrary point, for cells beyond the mesh.
    pub fn xi_at_point(&self, p: Point2) -> f64 {
        if self.extent < 1e-9 {
            return self.xi.first().copied().unwrap_or(0.0);
        }
        (((p - self.origin).dot(self.axis) - self.d_start) / self.extent).clamp(0.0, 1.0)
    }

    pub fn xi_at(&self, col: usize, row: usize) -> f64 {
        self.xi[row * self.cols + col]
    }

    pub fn tau_at(&self, col: usize, row: usize) -> f64 {
        self.tau[row * self.cols + col]
    }
}

/// Similarity weights along the projective axis of `h`.
///
/// Cell centers are projected onto `(cos theta, sin theta)` measured from
/// `ref_center`; the axis is oriented so the overlap lies on the low side.
/// The ramp starts at the cell containing `overlap_centroid` (`xi = 0` there
/// and behind it) and reaches `xi = 1` at the far extreme. When the overlap
/// cell is itself the extreme this is `(d - d_min) / (d_max - d_min)`.
/// A zero-extent ramp yields `xi = 0` everywhere.
pub fn compute_blend_weights(
    mesh: &GridMesh,
    h: &Homography,
    ref_center: Point2,
    overlap_centroid: Point2,
) -> BlendWeights {
    let theta = rotation_angle(h);
    let (s, c) = theta.sin_cos();
    let mut axis = Point2::new(c, s);
    let project = |axis: Point2, p: Point2| (p - ref_center).dot(axis);

    let (col, row) = mesh.nearest_cell(overlap_centroid);
    let anchor = mesh.cell_centers[mesh.cell_index(col, row)];
    let (lo, hi) =
        mesh.cell_centers
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                let d = project(axis, p);
                (lo.min(d), hi.max(d))
            });
    let d_anchor = project(axis, anchor);
    if d_anchor - lo > hi - d_anchor {
        axis = Point2::new(-axis.x, -axis.y);
    }
    let projections: Vec<f64> = mesh
        .cell_centers
        .iter()
        .map(|&p| project(axis, p))
        .collect();
    let d_start = project(axis, anchor);
    let d_max = projections
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let extent = d_max - d_start;
    let xi: Vec<f64> = projections
        .iter()
        .map(|&d| {
            if extent < 1e-9 {
                0.0
            } else {
                ((d - d_start) / extent).clamp(0.0, 1.0)
            }
        })
        .collect();
    BlendWeights {
        cols: mesh.cols,
        rows: mesh.rows,
        tau: xi.iter().map(|x| 1.0 - x).collect(),
        xi,
        axis,
        projections,
        origin: ref_center,
        d_start,
        extent,
    }
}

/// Per-cell target warps `H'_i` and reference adjustments `T'_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedWarpPair {
    pub cols: usize,
    pub rows: usize,
    pub target_warps: Vec<Homography>,
    pub reference_warps: Vec<Homography>,
}

impl AdjustedWarpPair {
    pub fn target(&self, col: usize, row: usize) -> &Homography {
        &self.target_warps[row * self.cols + col]
    }

    pub fn reference(&self, col: usize, row: usize) -> &Homography {
        &self.reference_warps[row * self.cols + col]
    }

    /// The unconstrained case: `H'_i = H_i`, `T'_i = I`.
    pub fn unconstrained(field: &LocalWarpField) -> Self {
        Self {
            cols: field.cols,
            rows: field.rows,
            target_warps: field.per_cell.clone(),
            reference_warps: alloc::vec![Homography::identity(); field.per_cell.len()],
        }
    }
}

/// `H'_i = tau_i H_i + xi_i S` and `T'_i = H'_i H_i^-1`.
pub fn apply_similarity_constraint(
    field: &LocalWarpField,
    s: &SimilarityTransform,
    weights: &BlendWeights,
) -> Result<AdjustedWarpPair> {
    if weights.xi.len() != field.per_cell.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "blend weights cover {} cells, field has {}",
            weights.xi.len(),
            field.per_cell.len()
        )));
    }
    let sm = *s.to_homography().matrix();
    let mut target_warps = Vec::with_capacity(field.per_cell.len());
    let mut reference_warps = Vec::with_capacity(field.per_cell.len());
    for (i, h) in field.per_cell.iter().enumerate() {
        let blended = Homography::new(h.matrix() * weights.tau[i] + sm * weights.xi[i]);
        let t = blended.compose(&h.inverse()?);
        target_warps.push(blended);
        reference_warps.push(t);
    }
    Ok(AdjustedWarpPair {
        cols: field.cols,
        rows: field.rows,
        target_warps,
        reference_warps,
    })
}
