//! Mesh refinement: a quadratic energy over the deformed vertex positions
//! combining point alignment, prewarp fidelity, shape preservation, line
//! correspondence and line straightness, solved through its normal equations.

mod anchor;
mod banded;
mod terms;

use alloc::vec::Vec;

pub use anchor::{bilinear_anchor, cut_line_by_grid, BilinearAnchor, CutPoint};
pub use banded::{solve_spd, BandCholesky, BandMatrix};
pub use terms::{
    build_collinearity_term, build_global_term, build_line_corr_term, build_line_corr_term_framed,
    build_point_term, build_smoothness_term, collinearity_term, prepare_collinear_lines,
    quad_salience, triangle_coords, unknowns_to_vertices, vertices_to_unknowns, CollinearLine,
    EnergyTerm, LineFrames, TermKind, Triangulation,
};

use crate::correspondence::{LineMatch, PointMatch};
use crate::error::{Error, Result};
use crate::geometry::{LineSegment, Point2};
use crate::grid::GridMesh;

/// Term coefficients `alpha` (points), `beta` (prewarp), `gamma` (shape),
/// `delta` (line correspondence) and `rho` (straightness).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.001,
            gamma: 0.01,
            delta: 1.0,
            rho: 0.001,
        }
    }
}

impl EnergyWeights {
    pub fn of(&self, kind: TermKind) -> f64 {
        match kind {
            TermKind::PointAlign => self.alpha,
            TermKind::GlobalAlign => self.beta,
            TermKind::Smoothness => self.gamma,
            TermKind::LineCorr => self.delta,
            TermKind::Collinearity => self.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    pub unknown_count: usize,
    pub terms: Vec<EnergyTerm>,
}

impl QuadraticSystem {
    pub fn new(unknown_count: usize) -> Self {
        Self {
            unknown_count,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, term: EnergyTerm) {
        self.terms.push(term);
    }

    /// `sum_t weight_t E_t(x)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.weight * t.energy(x)).sum()
    }

    fn bandwidth(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| (0..t.row_count()).map(move |r| t.row(r).0))
            .filter_map(|cols| {
                let lo = cols.iter().min()?;
                let hi = cols.iter().max()?;
                Some(hi - lo)
            })
            .max()
            .unwrap_or(0)
    }

    /// Normal equations `(sum_t w_t A_t^T A_t) x = sum_t w_t A_t^T b_t`.
    pub fn normal_equations(&self) -> (BandMatrix, Vec<f64>) {
        let mut n = BandMatrix::zeros(self.unknown_count, self.bandwidth());
        let mut rhs = alloc::vec![0.0; self.unknown_count];
        for t in self.terms.iter().filter(|t| t.weight != 0.0) {
            for r in 0..t.row_count() {
                let (cols, vals, b) = t.row(r);
                for (p, (&ci, &ai)) in cols.iter().zip(vals).enumerate() {
                    rhs[ci] += t.weight * ai * b;
                    for (q, (&cj, &aj)) in cols.iter().zip(vals).enumerate().take(p + 1) {
                        // A repeated unknown within one row meets itself in both orders.
                        let k = if q < p && ci == cj { 2.0 } else { 1.0 };
                        n.add(ci, cj, k * t.weight * ai * aj);
                    }
                }
            }
        }
        (n, rhs)
    }

    /// Minimizer of [`Self::energy`].
    pub fn solve(&self) -> Result<Vec<f64>> {
        let (n, rhs) = self.normal_equations();
        solve_spd(&n, &rhs)
    }
}

/// Everything the refinement needs, with reference-side quantities already
/// expressed in the output frame.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerInput<'a> {
    pub mesh: &'a GridMesh,
    /// Stage-one vertex positions `V_bar`.
    pub prewarp: &'a [Point2],
    pub points: &'a [PointMatch],
    pub lines: &'a [LineMatch],
    /// Per-cell partner lines, parallel to `lines`.
    pub line_frames: Option<&'a [LineFrames]>,
    /// Target lines kept straight (those outside the overlap).
    pub collinear: &'a [LineSegment],
    /// One salience factor per quad.
    pub salience: Option<&'a [f64]>,
    pub triangulation: Triangulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub vertices: Vec<Point2>,
    /// Total weighted energy after each solve.
    pub energies: Vec<f64>,
    pub skipped_points: usize,
    pub skipped_lines: usize,
}

fn static_system(
    input: &OptimizerInput<'_>,
    w: &EnergyWeights,
) -> Result<(QuadraticSystem, usize, usize)> {
    if !(w.beta > 0.0) {
        return Err(Error::InvalidInput(alloc::string::String::from(
            "the prewarp weight beta must be positive",
        )));
    }
    if input.prewarp.len() != input.mesh.vertex_count() {
        return Err(Error::InvalidInput(alloc::format!(
            "prewarp has {} vertices, mesh has {}",
            input.prewarp.len(),
            input.mesh.vertex_count()
        )));
    }
    let mut sys = QuadraticSystem::new(2 * input.mesh.vertex_count());
    let (ep, skipped_points) = build_point_term(input.points, input.mesh);
    let (el, skipped_lines) =
        build_line_corr_term_framed(input.lines, input.line_frames, input.mesh);
    sys.push(ep.with_weight(w.alpha));
    sys.push(build_global_term(input.mesh, input.prewarp).with_weight(w.beta));
    if w.gamma != 0.0 {
        let es = build_smoothness_term(
            input.mesh,
            input.prewarp,
            input.salience,
            input.triangulation,
        )?;
        sys.push(es.with_weight(w.gamma));
    }
    sys.push(el.with_weight(w.delta));
    Ok((sys, skipped_points, skipped_lines))
}

/// One quadratic solve of the full energy with `l_hat` from the prewarp.
pub fn solve(input: &OptimizerInput<'_>, weights: &EnergyWeights) -> Result<Vec<Point2>> {
    Ok(refine(input, weights, 1)?.vertices)
}

/// Solves the energy `iterations` times. After the first solve each
/// straightness line is re-fixed to whichever of its previous line, the line
/// through its current head and tail, or its current best-fit line leaves the
/// smallest straightness residual, so the total energy never increases.
pub fn refine(
    input: &OptimizerInput<'_>,
    weights: &EnergyWeights,
    iterations: usize,
) -> Result<RefineOutcome> {
    if iterations == 0 {
        return Err(Error::InvalidInput(alloc::string::String::from(
            "refine needs at least one iteration",
        )));
    }
    let (base, skipped_points, skipped_lines) = static_system(input, weights)?;
    let mut lines = if weights.rho != 0.0 {
        prepare_collinear_lines(input.collinear, input.mesh, input.prewarp)
    } else {
        Vec::new()
    };
    let mut energies = Vec::with_capacity(iterations);
    let mut vertices = input.prewarp.to_vec();
    for it in 0..iterations {
        if it > 0 {
            for line in &mut lines {
                let mut best = (line.interior_energy(&line.l_hat, &vertices), line.l_hat);
                for cand in [line.head_tail_line(&vertices), line.fitted_line(&vertices)]
                    .into_iter()
                    .flatten()
                {
                    let e = line.interior_energy(&cand, &vertices);
                    if e < best.0 {
                        best = (e, cand);
                    }
                }
                line.l_hat = best.1;
            }
        }
        let mut sys = base.clone();
        if !lines.is_empty() {
            sys.push(collinearity_term(&lines).with_weight(weights.rho));
        }
        let x = sys.solve()?;
        energies.push(sys.energy(&x));
        vertices = unknowns_to_vertices(&x);
    }
    Ok(RefineOutcome {
        vertices,
        energies,
        skipped_points,
        skipped_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Homography, SimilarityTransform};
    use crate::rng::CounterRng;
    use nalgebra::{DMatrix, DVector};

    fn jitter(v: &[Point2], amount: f64, r: &mut CounterRng) -> Vec<Point2> {
        v.iter()
            .map(|p| {
                *p + Point2::new(
                    r.uniform_range(-amount, amount),
                    r.uniform_range(-amount, amount),
                )
            })
            .collect()
    }

    fn rand_in(r: &mut CounterRng, m: &GridMesh) -> Point2 {
        Point2::new(
            r.uniform_range(0.0, m.width()),
            r.uniform_range(0.0, m.height()),
        )
    }

    struct Scene {
        mesh: GridMesh,
        prewarp: Vec<Point2>,
        points: Vec<PointMatch>,
        lines: Vec<LineMatch>,
        collinear: Vec<LineSegment>,
    }

    fn random_scene(seed: u64, cols: usize) -> Scene {
        let mesh = GridMesh::new(100.0, 100.0, cols, cols).unwrap();
        let mut r = CounterRng::new(seed, 5);
        let prewarp = jitter(&mesh.vertices, 2.0, &mut r);
        let points = (0..20)
            .map(|_| {
                let p = rand_in(&mut r, &mesh);
                PointMatch::new(
                    p,
                    p + Point2::new(r.uniform_range(-4.0, 4.0), r.uniform_range(-4.0, 4.0)),
                )
            })
            .collect();
        let lines = (0..6)
            .map(|_| {
                let a = LineSegment::new(rand_in(&mut r, &mesh), rand_in(&mut r, &mesh)).unwrap();
                let off = Point2::new(r.uniform_range(-3.0, 3.0), r.uniform_range(-3.0, 3.0));
                LineMatch::new(
                    a,
                    LineSegment::new(a.p0() + off, a.p1() + off * 0.5).unwrap(),
                )
            })
            .collect();
        let collinear = (0..4)
            .map(|_| LineSegment::new(rand_in(&mut r, &mesh), rand_in(&mut r, &mesh)).unwrap())
            .collect();
        Scene {
            mesh,
            prewarp,
            points,
            lines,
            collinear,
        }
    }

    impl Scene {
        fn input(&self) -> OptimizerInput<'_> {
            OptimizerInput {
                mesh: &self.mesh,
                prewarp: &self.prewarp,
                points: &self.points,
                lines: &self.lines,
                line_frames: None,
                collinear: &self.collinear,
                salience: None,
                triangulation: Triangulation::Eight,
            }
        }

        fn system(&self, w: &EnergyWeights) -> QuadraticSystem {
            let (mut sys, _, _) = static_system(&self.input(), w).unwrap();
            sys.push(
                build_collinearity_term(&self.collinear, &self.mesh, &self.prewarp)
                    .with_weight(w.rho),
            );
            sys
        }
    }

    fn dense_solve(sys: &QuadraticSystem) -> DVector<f64> {
        let n = sys.unknown_count;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for t in &sys.terms {
            for r in 0..t.row_count() {
                let (cols, vals, rhs) = t.row(r);
                let mut row = DVector::<f64>::zeros(n);
                for (&c, &v) in cols.iter().zip(vals) {
                    row[c] += v;
                }
                a += &row * row.transpose() * t.weight;
                b += &row * (rhs * t.weight);
            }
        }
        a.cholesky().unwrap().solve(&b)
    }

    #[test]
    fn global_term_alone_returns_prewarp() {
        let s = random_scene(1, 4);
        let w = EnergyWeights {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            delta: 0.0,
            rho: 0.0,
        };
        let v = solve(&s.input(), &w).unwrap();
        for (a, b) in v.iter().zip(&s.prewarp) {
            assert!(a.distance(*b) < 1e-12);
        }
    }

    #[test]
    fn point_pull_grows_as_beta_shrinks() {
        let mesh = GridMesh::new(30.0, 30.0, 3, 3).unwrap();
        let p = Point2::new(12.0, 14.0);
        let points = [PointMatch::new(p, p + Point2::new(5.0, 0.0))];
        let mut residuals = Vec::new();
        for beta in [1.0, 0.1, 0.01] {
            let input = OptimizerInput {
                mesh: &mesh,
                prewarp: &mesh.vertices,
                points: &points,
                lines: &[],
                line_frames: None,
                collinear: &[],
                salience: None,
                triangulation: Triangulation::Eight,
            };
            let w = EnergyWeights {
                beta,
                ..Default::default()
            };
            let v = solve(&input, &w).unwrap();
            let moved = bilinear_anchor(p, &mesh).unwrap().evaluate(&v);
            assert!(moved.x > p.x);
            residuals.push(moved.distance(points[0].p_prime));
        }
        assert!(
            residuals[0] > residuals[1] && residuals[1] > residuals[2],
            "{residuals:?}"
        );
    }

    #[test]
    fn matches_dense_normal_equations() {
        for seed in 0..3 {
            let s = random_scene(seed, 5);
            let w = EnergyWeights::default();
            let sys = s.system(&w);
            let x = sys.solve().unwrap();
            let oracle = dense_solve(&sys);
            let diff = (DVector::from_vec(x.clone()) - &oracle).norm();
            assert!(diff < 1e-6 * oracle.norm(), "{diff}");
        }
    }

    #[test]
    fn solution_is_a_minimum() {
        let s = random_scene(11, 5);
        let sys = s.system(&EnergyWeights::default());
        let x = sys.solve().unwrap();
        let base = sys.energy(&x);
        let mut r = CounterRng::new(2, 2);
        for _ in 0..20 {
            let dir: Vec<f64> = (0..x.len()).map(|_| r.gaussian()).collect();
            let n = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let moved: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + 1e-4 * d / n).collect();
            assert!(sys.energy(&moved) >= base - 1e-12 * (1.0 + base));
        }
    }

    #[test]
    fn repeated_unknowns_in_a_row() {
        let mut t = EnergyTerm::new(TermKind::GlobalAlign);
        t.push_row([(0, 1.0), (0, 2.0)], 3.0);
        t.push_row([(1, 1.0)], 1.0);
        let mut sys = QuadraticSystem::new(2);
        sys.push(t);
        let x = sys.solve().unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_affine_data_reproduces_warped_grid() {
        let mesh = GridMesh::new(80.0, 60.0, 8, 6).unwrap();
        let s = SimilarityTransform {
            scale: 1.2,
            theta: 0.15,
            tx: 30.0,
            ty: -5.0,
        };
        let h = Homography::from_rows([[1.1, 0.05, 4.0], [-0.03, 0.95, 2.0], [0.0, 0.0, 1.0]])
            .compose(&s.to_homography());
        let f = |p: Point2| h.apply(p).unwrap();
        let warped: Vec<Point2> = mesh.vertices.iter().map(|&p| f(p)).collect();
        let mut r = CounterRng::new(3, 3);
        let points: Vec<PointMatch> = (0..40)
            .map(|_| {
                let p = rand_in(&mut r, &mesh);
                PointMatch::new(p, f(p))
            })
            .collect();
        let lines: Vec<LineMatch> = (0..10)
            .map(|_| {
                let (a, b) = (rand_in(&mut r, &mesh), rand_in(&mut r, &mesh));
                LineMatch::new(
                    LineSegment::new(a, b).unwrap(),
                    LineSegment::new(f(a), f(b)).unwrap(),
                )
            })
            .collect();
        let collinear: Vec<LineSegment> = lines.iter().map(|l| l.l).collect();
        let input = OptimizerInput {
            mesh: &mesh,
            prewarp: &warped,
            points: &points,
            lines: &lines,
            line_frames: None,
            collinear: &collinear,
            salience: None,
            triangulation: Triangulation::Eight,
        };
        let out = refine(&input, &EnergyWeights::default(), 3).unwrap();
        for (a, b) in out.vertices.iter().zip(&warped) {
            assert!(a.distance(*b) < 1e-6);
        }
        assert!(out.energies.iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn refine_single_iteration_equals_solve() {
        let s = random_scene(4, 5);
        let w = EnergyWeights::default();
        let a = refine(&s.input(), &w, 1).unwrap();
        let x = s.system(&w).solve().unwrap();
        assert_eq!(a.vertices, unknowns_to_vertices(&x));
        assert_eq!(a.energies.len(), 1);
    }

    #[test]
    fn refine_energy_never_increases() {
        for seed in 0..10 {
            let s = random_scene(100 + seed, 5);
            let w = EnergyWeights {
                rho: 0.5,
                ..Default::default()
            };
            let out = refine(&s.input(), &w, 4).unwrap();
            for pair in out.energies.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "seed {seed}: {:?}", out.energies);
            }
        }
    }

    #[test]
    fn refine_reaches_fixed_point_on_consistent_data() {
        let mesh = GridMesh::new(60.0, 60.0, 6, 6).unwrap();
        let h = Homography::from_rows([[1.0, 0.1, 5.0], [0.0, 1.05, 2.0], [0.0, 0.0, 1.0]]);
        let f = |p: Point2| h.apply(p).unwrap();
        let pre: Vec<Point2> = mesh.vertices.iter().map(|&p| f(p)).collect();
        let mut r = CounterRng::new(9, 9);
        let points: Vec<PointMatch> = (0..30)
            .map(|_| {
                let p = rand_in(&mut r, &mesh);
                PointMatch::new(p, f(p))
            })
            .collect();
        let collinear: Vec<LineSegment> = (0..5)
            .map(|_| LineSegment::new(rand_in(&mut r, &mesh), rand_in(&mut r, &mesh)).unwrap())
            .collect();
        let input = OptimizerInput {
            mesh: &mesh,
            prewarp: &pre,
            points: &points,
            lines: &[],
            line_frames: None,
            collinear: &collinear,
            salience: None,
            triangulation: Triangulation::Eight,
        };
        let w = EnergyWeights::default();
        let two = refine(&input, &w, 2).unwrap();
        let three = refine(&input, &w, 3).unwrap();
        let delta = two
            .vertices
            .iter()
            .zip(&three.vertices)
            .map(|(a, b)| (a.x - b.x).abs().max((a.y - b.y).abs()))
            .fold(0.0, f64::max);
        assert!(delta < 1e-6, "{delta}");
    }

    #[test]
    fn beta_must_be_positive() {
        let s = random_scene(1, 3);
        let w = EnergyWeights {
            beta: 0.0,
            ..Default::default()
        };
        assert!(matches!(solve(&s.input(), &w), Err(Error::InvalidInput(_))));
    }
}
