//! Spatially varying homographies: one distance-weighted DLT solve per mesh
//! cell, with Gaussian weights on point and line correspondences floored at
//! `eta`.

use alloc::boxed::Box;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::CorrespondenceSet;
use crate::dlt::{smallest_right_singular_vector, stack_system};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Homography, LineSegment, Point2};
use crate::grid::GridMesh;

pub const DEFAULT_SIGMA: f64 = 8.5;
pub const DEFAULT_ETA: f64 = 0.01;

/// `max(exp(-|center - keypoint|^2 / sigma^2), eta)`.
pub fn point_weight(center: Point2, keypoint: Point2, sigma: f64, eta: f64) -> f64 {
    let d = center.distance(keypoint);
    (-(d * d) / (sigma * sigma)).exp().max(eta)
}

/// Same Gaussian on the distance from `center` to the finite segment.
pub fn line_weight(center: Point2, segment: &LineSegment, sigma: f64, eta: f64) -> f64 {
    let d = point_segment_distance(center, segment);
    (-(d * d) / (sigma * sigma)).exp().max(eta)
}

/// Per-cell homographies, row-major over the mesh cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWarpField {
    pub cols: usize,
    pub rows: usize,
    pub per_cell: Vec<Homography>,
    pub sigma: f64,
    pub eta: f64,
}

impl LocalWarpField {
    /// Every cell carries the same homography (the global-model case).
    pub fn constant(mesh: &GridMesh, h: Homography) -> Self {
        Self {
            cols: mesh.cols,
            rows: mesh.rows,
            per_cell: alloc::vec![h; mesh.cell_count()],
            sigma: f64::INFINITY,
            eta: 1.0,
        }
    }

    pub fn cell(&self, col: usize, row: usize) -> &Homography {
        &self.per_cell[row * self.cols + col]
    }
}

/// Moving DLT over every cell of `mesh`.
pub fn estimate_local_warp(
    set: &CorrespondenceSet,
    mesh: &GridMesh,
    sigma: f64,
    eta: f64,
) -> Result<LocalWarpField> {
    estimate_local_warp_weighted(set, mesh, sigma, eta, 1.0)
}

/// Moving DLT with line rows additionally scaled by `line_scale`.
pub fn estimate_local_warp_weighted(
    set: &CorrespondenceSet,
    mesh: &GridMesh,
    sigma: f64,
    eta: f64,
    line_scale: f64,
) -> Result<LocalWarpField> {
    if !(sigma > 0.0) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(alloc::format!(
            "moving DLT needs sigma > 0 and eta in [0, 1] (got {sigma}, {eta})"
        )));
    }
    let sys = stack_system(set, line_scale)?;
    let n_rows = sys.rows();

    // A uniform weight vector leaves the null space unchanged, so every such
    // cell shares the unweighted solution.
    let mut uniform: Option<Homography> = None;
    let mut weights = alloc::vec![0.0; n_rows];
    let mut wc = sys.c.clone();
    let mut per_cell = Vec::with_capacity(mesh.cell_count());

    for row in 0..mesh.rows {
        for col in 0..mesh.cols {
            let center = mesh.cell_centers[mesh.cell_index(col, row)];
            for (i, m) in set.points.iter().enumerate() {
                let w = point_weight(center, m.p, sigma, eta);
                weights[2 * i] = w;
                weights[2 * i + 1] = w;
            }
            let base = 2 * set.points.len();
            for (j, m) in set.lines.iter().enumerate() {
                let w = line_weight(center, &m.l, sigma, eta);
                weights[base + 2 * j] = w;
                weights[base + 2 * j + 1] = w;
            }
            let annotate = |e: Error| Error::Cell {
                col,
                row,
                source: Box::new(e),
            };
            let first = weights[0];
            let h = if weights.iter().all(|&w| w == first) {
                match uniform {
                    Some(h) => h,
                    None => {
                        let v = smallest_right_singular_vector(&sys.c).map_err(annotate)?;
                        let h = sys
                            .denormalize(&Homography::from_vec(&v))
                            .map_err(annotate)?;
                        uniform = Some(h);
                        h
                    }
                }
            } else {
                for r in 0..n_rows {
                    let w = weights[r];
                    for k in 0..9 {
                        wc[(r, k)] = w * sys.c[(r, k)];
                    }
                }
                let v = smallest_right_singular_vector(&wc).map_err(annotate)?;
                sys.denormalize(&Homography::from_vec(&v))
                    .map_err(annotate)?
            };
            per_cell.push(h);
        }
    }
    Ok(LocalWarpField {
        cols: mesh.cols,
        rows: mesh.rows,
        per_cell,
        sigma,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{ImageSize, LineMatch, PointMatch};
    use crate::dlt::{estimate_global_homography, estimate_points_homography};
    use crate::rng::CounterRng;
    use alloc::vec;

    #[test]
    fn point_weight_examples() {
        let c = Point2::new(10.0, 10.0);
        assert_eq!(point_weight(c, c, 8.5, 0.01), 1.0);
        let w = point_weight(c, Point2::new(18.5, 10.0), 8.5, 0.01);
        assert!((w - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(point_weight(c, Point2::new(110.0, 10.0), 8.5, 0.01), 0.01);
    }

    #[test]
    fn line_weight_examples() {
        let seg = LineSegment::new(Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)).unwrap();
        assert_eq!(line_weight(Point2::new(40.0, 0.0), &seg, 8.5, 0.01), 1.0);
        let w = line_weight(Point2::new(40.0, 8.5), &seg, 8.5, 0.01);
        assert!((w - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(line_weight(Point2::new(185.0, 0.0), &seg, 8.5, 0.01), 0.01);
    }

    #[test]
    fn weights_are_monotone_and_bounded() {
        let c = Point2::new(0.0, 0.0);
        let mut prev = 1.0;
        for i in 0..200 {
            let w = point_weight(c, Point2::new(i as f64 * 0.5, 0.0), 8.5, 0.01);
            assert!(w <= prev && (0.01..=1.0).contains(&w));
            prev = w;
        }
    }

    fn scene(h: &Homography, seed: u64) -> CorrespondenceSet {
        let mut r = CounterRng::new(seed, 1);
        let mut pt = || Point2::new(r.uniform_range(0.0, 320.0), r.uniform_range(0.0, 240.0));
        let points = (0..30)
            .map(|_| {
                let p = pt();
                PointMatch::new(p, h.apply(p).unwrap())
            })
            .collect();
        let lines = (0..10)
            .map(|_| {
                let (a, b) = (pt(), pt());
                LineMatch::new(
                    LineSegment::new(a, b).unwrap(),
                    LineSegment::new(h.apply(a).unwrap(), h.apply(b).unwrap()).unwrap(),
                )
            })
            .collect();
        CorrespondenceSet::new(
            points,
            lines,
            ImageSize::new(320, 240),
            ImageSize::new(320, 240),
        )
    }

    fn h_true() -> Homography {
        Homography::from_rows([[1.01, 0.03, 12.0], [-0.02, 0.99, 5.0], [1e-4, 5e-5, 1.0]])
    }

    #[test]
    fn saturated_weights_reproduce_global() {
        let mut s = scene(&h_true(), 3);
        let mut r = CounterRng::new(4, 4);
        for m in &mut s.points {
            m.p_prime.x += r.gaussian();
        }
        let mesh = GridMesh::new(320.0, 240.0, 8, 6).unwrap();
        let g = estimate_global_homography(&s).unwrap();
        let f = estimate_local_warp(&s, &mesh, 8.5, 1.0).unwrap();
        for h in &f.per_cell {
            assert!(h.max_abs_diff(&g) < 1e-9);
        }
        let f = estimate_local_warp(&s, &mesh, 1e6, 0.01).unwrap();
        for h in &f.per_cell {
            assert!(h.max_abs_diff(&g) < 1e-6);
        }
    }

    #[test]
    fn consistent_single_plane_recovered_in_every_cell() {
        let h = h_true();
        let s = scene(&h, 5);
        let mesh = GridMesh::new(320.0, 240.0, 8, 6).unwrap();
        for sigma in [4.0, 8.5, 50.0] {
            let f = estimate_local_warp(&s, &mesh, sigma, 0.01).unwrap();
            for cell in &f.per_cell {
                assert!(cell.relative_error(&h) < 1e-6);
            }
        }
    }

    fn two_plane_scene(spacing: f64) -> (CorrespondenceSet, Vec<PointMatch>, Vec<PointMatch>) {
        let ha = Homography::from_rows([[1.0, 0.0, 10.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let hb = Homography::from_rows([[1.05, 0.02, -4.0], [0.01, 1.02, 6.0], [1e-4, 0.0, 1.0]]);
        let mut r = CounterRng::new(21, 2);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let n = (120.0 / spacing) as usize;
        for i in 0..n {
            for j in 0..(240.0 / spacing) as usize {
                let jitter =
                    Point2::new(r.uniform_range(0.0, spacing), r.uniform_range(0.0, spacing));
                let p = Point2::new(i as f64 * spacing, j as f64 * spacing) + jitter;
                left.push(PointMatch::new(p, ha.apply(p).unwrap()));
                let q = p + Point2::new(200.0, 0.0);
                right.push(PointMatch::new(q, hb.apply(q).unwrap()));
            }
        }
        let points = left.iter().chain(&right).copied().collect();
        let s = CorrespondenceSet::new(
            points,
            vec![],
            ImageSize::new(320, 240),
            ImageSize::new(320, 240),
        );
        (s, left, right)
    }

    #[test]
    fn two_plane_scene_localizes() {
        let (s, left, right) = two_plane_scene(4.0);
        let mesh = GridMesh::new(320.0, 240.0, 16, 12).unwrap();
        let oracle_a = estimate_points_homography(&left).unwrap();
        let oracle_b = estimate_points_homography(&right).unwrap();
        // The floor lets every far correspondence leak into a cell, so exact
        // per-half recovery needs eta near zero; the error grows roughly as 3e3 * eta.
        let f = estimate_local_warp(&s, &mesh, 8.5, 1e-9).unwrap();
        for row in 0..mesh.rows {
            assert!(f.cell(0, row).relative_error(&oracle_a) < 1e-3);
            assert!(f.cell(mesh.cols - 1, row).relative_error(&oracle_b) < 1e-3);
        }
        // At the default floor the edge cells still side with their own half.
        let f = estimate_local_warp(&s, &mesh, 8.5, DEFAULT_ETA).unwrap();
        for row in 0..mesh.rows {
            let at = |h: &Homography, p: Point2| h.apply(p).unwrap();
            let c = mesh.cell_centers[mesh.cell_index(0, row)];
            assert!(
                at(f.cell(0, row), c).distance(at(&oracle_a, c))
                    < at(f.cell(0, row), c).distance(at(&oracle_b, c))
            );
            let c = mesh.cell_centers[mesh.cell_index(mesh.cols - 1, row)];
            let h = f.cell(mesh.cols - 1, row);
            assert!(at(h, c).distance(at(&oracle_b, c)) < at(h, c).distance(at(&oracle_a, c)));
        }
    }

    #[test]
    fn rank_errors_carry_cell_context() {
        let h = h_true();
        let mut s = scene(&h, 6);
        s.points.truncate(3);
        s.lines.clear();
        let mesh = GridMesh::new(320.0, 240.0, 2, 2).unwrap();
        assert!(matches!(
            estimate_local_warp(&s, &mesh, 8.5, 0.01),
            Err(Error::RankDeficient { rows: 6 })
        ));
    }
}
