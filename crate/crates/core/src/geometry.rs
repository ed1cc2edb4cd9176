//! Homogeneous-coordinate primitives shared by every estimator.
//!
//! Image coordinates have their origin at the top-left corner with `x` to the
//! right and `y` downward. Pixel `(u, v)` covers `[u, u+1) x [v, v+1)` and is
//! sampled at its center `(u + 0.5, v + 0.5)`.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn homogeneous(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Implicit line `a*x + b*y + c = 0` with `a^2 + b^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ImplicitLine {
    /// Normalizes arbitrary homogeneous coefficients. Fails when `(a, b)` vanishes
    /// (the line at infinity).
    pub fn from_coeffs(a: f64, b: f64, c: f64) -> Result<Self> {
        let n = a.hypot(b);
        if !(n > 1e-300) || !n.is_finite() || !c.is_finite() {
            return Err(Error::DegenerateConfiguration("line at infinity"));
        }
        Ok(Self {
            a: a / n,
            b: b / n,
            c: c / n,
        })
    }

    /// Cross product of the homogeneous endpoints, normalized.
    pub fn through(p0: Point2, p1: Point2) -> Result<Self> {
        let d = p0.distance(p1);
        if !(d >= 1e-9) {
            return Err(Error::DegenerateSegment(d));
        }
        let l = p0.homogeneous().cross(&p1.homogeneous());
        Self::from_coeffs(l.x, l.y, l.z)
    }

    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    pub fn distance(&self, p: Point2) -> f64 {
        self.signed_distance(p).abs()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    /// Image of the line under a point transform `t`: `l' = t^{-T} l`.
    pub fn transformed(&self, t: &Homography) -> Result<Self> {
        let inv = t.inverse()?;
        let l = inv.matrix().transpose() * self.as_vector();
        Self::from_coeffs(l.x, l.y, l.z)
    }
}

/// Finite segment with its normalized supporting line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    p0: Point2,
    p1: Point2,
    line: ImplicitLine,
}

impl LineSegment {
    pub fn new(p0: Point2, p1: Point2) -> Result<Self> {
        Ok(Self {
            p0,
            p1,
            line: ImplicitLine::through(p0, p1)?,
        })
    }

    /// Head endpoint.
    pub fn p0(&self) -> Point2 {
        self.p0
    }

    /// Tail endpoint.
    pub fn p1(&self) -> Point2 {
        self.p1
    }

    pub fn line(&self) -> &ImplicitLine {
        &self.line
    }

    pub fn coeffs(&self) -> [f64; 3] {
        [self.line.a, self.line.b, self.line.c]
    }

    pub fn length(&self) -> f64 {
        self.p0.distance(self.p1)
    }

    pub fn midpoint(&self) -> Point2 {
        self.p0.lerp(self.p1, 0.5)
    }
}

/// Builds a segment and its implicit line from two endpoints.
pub fn line_from_endpoints(p0: Point2, p1: Point2) -> Result<LineSegment> {
    LineSegment::new(p0, p1)
}

/// Perpendicular distance to the segment's infinite supporting line.
pub fn point_line_distance(p: Point2, l: &LineSegment) -> f64 {
    l.line.distance(p)
}

/// Distance to the closest point of the finite segment: perpendicular inside
/// the segment's slab, nearest endpoint outside it.
pub fn point_segment_distance(p: Point2, l: &LineSegment) -> f64 {
    let d = l.p1 - l.p0;
    let t = (p - l.p0).dot(d) / d.dot(d);
    if t <= 0.0 || t >= 1.0 {
        p.distance(l.p0).min(p.distance(l.p1))
    } else {
        point_line_distance(p, l)
    }
}

/// Planar projective transform, scale-normalized so that `m[2][2] = 1` whenever
/// `|m[2][2]| > 1e-12` and to unit Frobenius norm otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Self {
        let s = m[(2, 2)];
        let m = if s.abs() > 1e-12 {
            m / s
        } else {
            let n = m.norm();
            if n > 0.0 {
                m / n
            } else {
                m
            }
        };
        Self { m }
    }

    pub fn from_rows(r: [[f64; 3]; 3]) -> Self {
        Self::new(Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ))
    }

    /// From the row-major vectorization `h = [h1..h9]`.
    pub fn from_vec(h: &[f64]) -> Self {
        Self::new(Matrix3::from_row_slice(&h[..9]))
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_rows([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::from_rows([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Row-major `h1..h9`.
    pub fn to_vec(&self) -> [f64; 9] {
        let r = self.to_rows();
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ]
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    pub fn is_affine(&self) -> bool {
        self.m[(2, 0)] == 0.0 && self.m[(2, 1)] == 0.0
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let v = self.m * p.homogeneous();
        if !(v.z.abs() > 1e-12) {
            return Err(Error::PointAtInfinity(v.z));
        }
        Ok(Point2::new(v.x / v.z, v.y / v.z))
    }

    pub fn inverse(&self) -> Result<Homography> {
        let det = self.det();
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularHomography(det));
        }
        self.m
            .try_inverse()
            .map(Homography::new)
            .ok_or(Error::SingularHomography(det))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        Homography::new(self.m * other.m)
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.m - other.m).amax()
    }

    /// `||self - other||_F / ||other||_F` on normalized matrices.
    pub fn relative_error(&self, truth: &Homography) -> f64 {
        (self.m - truth.m).norm() / truth.m.norm()
    }
}

/// `s * R(theta) * p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn to_homography(&self) -> Homography {
        let (s, c) = self.theta.sin_cos();
        let (a, b) = (self.scale * c, self.scale * s);
        Homography::from_rows([[a, -b, self.tx], [b, a, self.ty], [0.0, 0.0, 1.0]])
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(
            self.scale * (c * p.x - s * p.y) + self.tx,
            self.scale * (s * p.x + c * p.y) + self.ty,
        )
    }
}

/// Result of isotropic point-centric normalization.
#[derive(Debug, Clone)]
pub struct Normalized {
    /// The applied similarity `p_norm = T p`.
    pub transform: Homography,
    pub points: Vec<Point2>,
    pub line_endpoints: Vec<Point2>,
}

/// Translates the union of `points` and `line_endpoints` to its centroid and
/// scales it isotropically to mean distance `sqrt(2)` from the origin.
pub fn normalize_correspondences(
    points: &[Point2],
    line_endpoints: &[Point2],
) -> Result<Normalized> {
    let n = points.len() + line_endpoints.len();
    if n < 2 {
        return Err(Error::DegenerateConfiguration(
            "fewer than two points to normalize",
        ));
    }
    let all = || points.iter().chain(line_endpoints.iter());
    let (sx, sy) = all().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let centroid = Point2::new(sx / n as f64, sy / n as f64);
    let mean = all().map(|p| p.distance(centroid)).sum::<f64>() / n as f64;
    if !(mean > 1e-12 * (1.0 + centroid.norm())) {
        return Err(Error::DegenerateConfiguration("all points coincide"));
    }
    let s = core::f64::consts::SQRT_2 / mean;
    let map = |p: &Point2| Point2::new(s * (p.x - centroid.x), s * (p.y - centroid.y));
    Ok(Normalized {
        transform: Homography::from_rows([
            [s, 0.0, -s * centroid.x],
            [0.0, s, -s * centroid.y],
            [0.0, 0.0, 1.0],
        ]),
        points: points.iter().map(map).collect(),
        line_endpoints: line_endpoints.iter().map(map).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn coeffs_match(got: [f64; 3], want: [f64; 3]) -> bool {
        let same = got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-12);
        let flipped = got.iter().zip(want).all(|(g, w)| (g + w).abs() < 1e-12);
        same || flipped
    }

    #[test]
    fn line_coefficients() {
        let l = line_from_endpoints(p(0.0, 0.0), p(1.0, 0.0)).unwrap();
        assert!(coeffs_match(l.coeffs(), [0.0, 1.0, 0.0]));
        let l = line_from_endpoints(p(1.0, 0.0), p(1.0, 5.0)).unwrap();
        assert!(coeffs_match(l.coeffs(), [1.0, 0.0, -1.0]));
        let r = 1.0 / 2f64.sqrt();
        let l = line_from_endpoints(p(0.0, 0.0), p(1.0, 1.0)).unwrap();
        assert!(coeffs_match(l.coeffs(), [r, -r, 0.0]));
        assert!(matches!(
            line_from_endpoints(p(1.0, 1.0), p(1.0, 1.0 + 1e-10)),
            Err(Error::DegenerateSegment(_))
        ));
    }

    #[test]
    fn distances() {
        let x_axis = line_from_endpoints(p(0.0, 0.0), p(1.0, 0.0)).unwrap();
        assert_eq!(point_line_distance(p(3.0, 4.0), &x_axis), 4.0);
        assert_eq!(point_line_distance(p(7.0, 0.0), &x_axis), 0.0);
        let diag = line_from_endpoints(p(1.0, 0.0), p(0.0, 1.0)).unwrap();
        assert!((point_line_distance(p(0.0, 0.0), &diag) - 0.5f64.sqrt()).abs() < 1e-12);

        let seg = line_from_endpoints(p(1.0, 0.0), p(2.0, 0.0)).unwrap();
        assert!((point_segment_distance(p(0.0, 0.0), &seg) - 1.0).abs() < 1e-12);
        assert!((point_segment_distance(p(1.5, 2.0), &seg) - 2.0).abs() < 1e-12);
        assert!((point_segment_distance(p(3.0, 4.0), &seg) - 17f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn apply_homography_examples() {
        let q = Homography::identity().apply(p(5.0, 7.0)).unwrap();
        assert_eq!(q, p(5.0, 7.0));
        let q = Homography::translation(2.0, -3.0)
            .apply(p(0.0, 0.0))
            .unwrap();
        assert_eq!(q, p(2.0, -3.0));
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.001, 0.0, 1.0]]);
        let q = h.apply(p(100.0, 50.0)).unwrap();
        assert!((q.x - 100.0 / 1.1).abs() < 1e-12 && (q.y - 50.0 / 1.1).abs() < 1e-12);
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.01, 0.0, 1.0]]);
        assert!(matches!(
            h.apply(p(100.0, 0.0)),
            Err(Error::PointAtInfinity(_))
        ));
    }

    #[test]
    fn homography_scale_normalization() {
        let h = Homography::new(Matrix3::identity() * 4.0);
        assert_eq!(h, Homography::identity());
        let h = Homography::from_rows([[0.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!((h.matrix().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let pts = [p(0.0, 0.0), p(2.0, 0.0), p(0.0, 2.0), p(2.0, 2.0)];
        let n = normalize_correspondences(&pts, &[]).unwrap();
        let want = Homography::translation(-1.0, -1.0);
        assert!(n.transform.max_abs_diff(&want) < 1e-12);

        let again = normalize_correspondences(&n.points, &[]).unwrap();
        assert!(again.transform.max_abs_diff(&Homography::identity()) < 1e-9);

        assert!(normalize_correspondences(&[p(3.0, 3.0); 5], &[]).is_err());
    }

    #[test]
    fn normalization_splits_points_and_endpoints() {
        let pts = [p(10.0, 4.0), p(-3.0, 8.0)];
        let ends = [p(100.0, 50.0), p(20.0, -5.0), p(7.0, 7.0)];
        let n = normalize_correspondences(&pts, &ends).unwrap();
        assert_eq!(n.points.len(), 2);
        assert_eq!(n.line_endpoints.len(), 3);
        let all: Vec<Point2> = n.points.iter().chain(&n.line_endpoints).copied().collect();
        let c = all.iter().fold(p(0.0, 0.0), |a, &b| a + b) * (1.0 / 5.0);
        assert!(c.norm() < 1e-12);
        let mean = all.iter().map(|q| q.norm()).sum::<f64>() / 5.0;
        assert!((mean - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn similarity_to_homography() {
        let s = SimilarityTransform {
            scale: 2.0,
            theta: 0.3,
            tx: 3.0,
            ty: -1.0,
        };
        let h = s.to_homography();
        let q = p(4.0, -7.0);
        let a = h.apply(q).unwrap();
        let b = s.apply(q);
        assert!(a.distance(b) < 1e-12);
        assert_eq!(h.to_rows()[2], [0.0, 0.0, 1.0]);
    }

    fn arb_point() -> impl Strategy<Value = Point2> {
        (-500.0..500.0f64, -500.0..500.0f64).prop_map(|(x, y)| p(x, y))
    }

    fn arb_homography() -> impl Strategy<Value = Homography> {
        (
            0.5..1.5f64,
            -0.4..0.4f64,
            -0.3..0.3f64,
            0.5..1.5f64,
            -50.0..50.0f64,
            -50.0..50.0f64,
            -5e-4..5e-4f64,
            -5e-4..5e-4f64,
        )
            .prop_map(|(a, b, c, d, tx, ty, g, h)| {
                Homography::from_rows([[a, b, tx], [c, d, ty], [g, h, 1.0]])
            })
    }

    proptest! {
        #[test]
        fn endpoints_lie_on_their_line(p0 in arb_point(), p1 in arb_point()) {
            prop_assume!(p0.distance(p1) > 1e-6);
            let l = line_from_endpoints(p0, p1).unwrap();
            let [a, b, _] = l.coeffs();
            prop_assert!((a * a + b * b - 1.0).abs() < 1e-12);
            prop_assert!(l.line().distance(p0) < 1e-9);
            prop_assert!(l.line().distance(p1) < 1e-9);
        }

        #[test]
        fn segment_distance_dominates_line_distance(q in arb_point(), p0 in arb_point(), p1 in arb_point()) {
            prop_assume!(p0.distance(p1) > 1e-3);
            let l = line_from_endpoints(p0, p1).unwrap();
            let ds = point_segment_distance(q, &l);
            let dl = point_line_distance(q, &l);
            prop_assert!(ds >= dl - 1e-9);
            let d = p1 - p0;
            let t = (q - p0).dot(d) / d.dot(d);
            if t > 0.0 && t < 1.0 {
                prop_assert!((ds - dl).abs() < 1e-9);
            }
        }

        #[test]
        fn inverse_round_trip(h in arb_homography(), q in arb_point()) {
            let inv = h.inverse().unwrap();
            let r = inv.apply(h.apply(q).unwrap()).unwrap();
            prop_assert!(r.distance(q) < 1e-6);
        }

        #[test]
        fn normalized_set_has_unit_statistics(pts in proptest::collection::vec(arb_point(), 2..30)) {
            let spread = pts.iter().map(|q| q.distance(pts[0])).fold(0.0, f64::max);
            prop_assume!(spread > 1e-3);
            let n = normalize_correspondences(&pts, &[]).unwrap();
            let c = n.points.iter().fold(p(0.0, 0.0), |a, &b| a + b) * (1.0 / pts.len() as f64);
            prop_assert!(c.norm() < 1e-9);
            let mean = n.points.iter().map(|q| q.norm()).sum::<f64>() / pts.len() as f64;
            prop_assert!((mean - 2f64.sqrt()).abs() < 1e-9);
            for (a, b) in pts.iter().zip(&n.points) {
                prop_assert!(n.transform.apply(*a).unwrap().distance(*b) < 1e-9);
            }
        }
    }
}
