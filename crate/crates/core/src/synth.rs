//! Deterministic synthetic scenes with known warps.
//!
//! A scene is a set of planar regions in the target image, each moved into
//! the reference image by its own homography. Points and segments are drawn
//! per region from counter-based streams, so a seed fixes every value.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::{CorrespondenceSet, ImageSize, LineMatch, PointMatch};
use crate::dlt::estimate_points_homography;
use crate::error::{Error, Result};
use crate::geometry::{
    point_segment_distance, Homography, LineSegment, Point2, SimilarityTransform,
};
use crate::raster::Image;
use crate::rng::CounterRng;

const STREAM_POINTS: u64 = 0x5059;
const STREAM_LINES: u64 = 0x4c49;
const STREAM_OUTLIERS: u64 = 0x4f55;
const STREAM_SIMILARITY: u64 = 0x5349;
const STREAM_WARP: u64 = 0x4857;

/// Tries per sample before a region is declared empty.
const MAX_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub homography: Homography,
    /// Simple polygon in target coordinates.
    pub region: Vec<Point2>,
}

impl Plane {
    pub fn rect(homography: Homography, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            homography,
            region: alloc::vec![
                Point2::new(x0, y0),
                Point2::new(x1, y0),
                Point2::new(x1, y1),
                Point2::new(x0, y1)
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub planes: Vec<Plane>,
    /// Per plane.
    pub n_points: usize,
    pub n_lines: usize,
    pub noise_sigma: f64,
    /// Fraction of all point matches whose reference side is replaced by a
    /// uniform random position.
    pub outlier_fraction: f64,
    pub target_size: ImageSize,
    pub reference_size: ImageSize,
}

impl SceneSpec {
    pub fn single_plane(seed: u64, size: ImageSize, h: Homography) -> Self {
        Self {
            seed,
            planes: alloc::vec![Plane::rect(
                h,
                0.0,
                0.0,
                size.width as f64,
                size.height as f64
            )],
            n_points: 100,
            n_lines: 20,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            target_size: size,
            reference_size: size,
        }
    }

    /// Left and right halves of the target under `h_left` and `h_right`.
    pub fn two_plane(seed: u64, size: ImageSize, h_left: Homography, h_right: Homography) -> Self {
        let (w, h) = (size.width as f64, size.height as f64);
        Self {
            planes: alloc::vec![
                Plane::rect(h_left, 0.0, 0.0, 0.5 * w, h),
                Plane::rect(h_right, 0.5 * w, 0.0, w, h)
            ],
            ..Self::single_plane(seed, size, Homography::identity())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "outlier fraction {} or noise {} out of range",
                self.outlier_fraction,
                self.noise_sigma
            )));
        }
        for (i, plane) in self.planes.iter().enumerate() {
            if plane.region.len() < 3 || polygon_area(&plane.region).abs() < 1e-9 {
                return Err(Error::EmptyRegion);
            }
            let cond =
                normalized_condition(&plane.homography, self.target_size, self.reference_size);
            if !(cond < 1e4) {
                return Err(Error::InvalidInput(alloc::format!(
                    "plane {i}: homography condition {cond:e} exceeds 1e4"
                )));
            }
            for (j, other) in self.planes.iter().enumerate().skip(i + 1) {
                if polygons_overlap(&plane.region, &other.region) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "regions {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Condition number of `H` after mapping both images to `[-1, 1]`.
pub fn normalized_condition(h: &Homography, target: ImageSize, reference: ImageSize) -> f64 {
    let norm = |s: ImageSize| {
        let (w, h) = (s.width.max(1) as f64, s.height.max(1) as f64);
        Homography::from_rows([[2.0 / w, 0.0, -1.0], [0.0, 2.0 / h, -1.0], [0.0, 0.0, 1.0]])
    };
    let Ok(t_inv) = norm(target).inverse() else {
        return f64::INFINITY;
    };
    let m = norm(reference).compose(h).compose(&t_inv);
    let sv = m.matrix().singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
}

/// Even-odd rule; boundary points count as inside for axis-aligned edges.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn polygon_distance(p: Point2, poly: &[Point2]) -> f64 {
    if point_in_polygon(p, poly) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .filter_map(|k| LineSegment::new(poly[k], poly[(k + 1) % n]).ok())
        .map(|s| point_segment_distance(p, &s))
        .fold(f64::INFINITY, f64::min)
}

fn segments_cross(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> bool {
    let orient = |p: Point2, q: Point2, r: Point2| (q - p).x * (r - p).y - (q - p).y * (r - p).x;
    let (d1, d2) = (orient(b0, b1, a0), orient(b0, b1, a1));
    let (d3, d4) = (orient(a0, a1, b0), orient(a0, a1, b1));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Interiors intersect: a proper edge crossing, or a sample of the common
/// bounding box inside both. Shared edges do not count.
fn polygons_overlap(a: &[Point2], b: &[Point2]) -> bool {
    let (na, nb) = (a.len(), b.len());
    for i in 0..na {
        for j in 0..nb {
            if segments_cross(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]) {
                return true;
            }
        }
    }
    let ((alo, ahi), (blo, bhi)) = (bounding_box(a), bounding_box(b));
    let lo = Point2::new(alo.x.max(blo.x), alo.y.max(blo.y));
    let hi = Point2::new(ahi.x.min(bhi.x), ahi.y.min(bhi.y));
    if !(hi.x > lo.x && hi.y > lo.y) {
        return false;
    }
    let n = 32;
    (0..n * n).any(|k| {
        let p = Point2::new(
            lo.x + (hi.x - lo.x) * ((k % n) as f64 + 0.5) / n as f64,
            lo.y + (hi.y - lo.y) * ((k / n) as f64 + 0.5) / n as f64,
        );
        point_in_polygon(p, a) && point_in_polygon(p, b)
    })
}

fn bounding_box(poly: &[Point2]) -> (Point2, Point2) {
    poly.iter().fold((poly[0], poly[0]), |(lo, hi), p| {
        (
            Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    })
}

/// A target point inside `plane` whose image lies inside the reference.
fn sample_visible(
    r: &mut CounterRng,
    plane: &Plane,
    reference: ImageSize,
) -> Result<(Point2, Point2)> {
    let (lo, hi) = bounding_box(&plane.region);
    for _ in 0..MAX_TRIES {
        let p = Point2::new(r.uniform_range(lo.x, hi.x), r.uniform_range(lo.y, hi.y));
        if !point_in_polygon(p, &plane.region) {
            continue;
        }
        if let Ok(q) = plane.homography.apply(p) {
            if reference.contains(q) {
                return Ok((p, q));
            }
        }
    }
    Err(Error::EmptyRegion)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub set: CorrespondenceSet,
    /// One homography per plane.
    pub ground_truth: Vec<Homography>,
    /// Indices into `set.points` whose reference side was replaced.
    pub outliers: Vec<usize>,
    pub point_planes: Vec<usize>,
    pub line_planes: Vec<usize>,
}

/// Draws the correspondences of `spec`.
///
/// Points are uniform in each region, restricted to those visible in the
/// reference, and mapped by the region's homography; the reference side gets
/// isotropic Gaussian noise. Segments join two region points at least a tenth
/// of the region's shorter side apart; the reference segment is the mapped
/// segment with each end slid along the line by up to 15% of its length, then
/// jittered by the same noise.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let sigma = spec.noise_sigma;
    let mut points = Vec::new();
    let mut point_planes = Vec::new();
    let mut lines = Vec::new();
    let mut line_planes = Vec::new();
    for (k, plane) in spec.planes.iter().enumerate() {
        let mut r = CounterRng::new(spec.seed, STREAM_POINTS + 0x100 * k as u64);
        for _ in 0..spec.n_points {
            let (p, q) = sample_visible(&mut r, plane, spec.reference_size)?;
            let noise = Point2::new(sigma * r.gaussian(), sigma * r.gaussian());
            points.push(PointMatch::new(p, q + noise));
            point_planes.push(k);
        }

        let mut r = CounterRng::new(spec.seed, STREAM_LINES + 0x100 * k as u64);
        let (lo, hi) = bounding_box(&plane.region);
        let min_len = 0.1 * (hi.x - lo.x).min(hi.y - lo.y);
        let mut drawn = 0;
        let mut tries = 0;
        while drawn < spec.n_lines {
            tries += 1;
            if tries > MAX_TRIES * spec.n_lines.max(1) {
                return Err(Error::EmptyRegion);
            }
            let (a, _) = sample_visible(&mut r, plane, spec.reference_size)?;
            let (b, _) = sample_visible(&mut r, plane, spec.reference_size)?;
            if a.distance(b) < min_len {
                continue;
            }
            let d = b - a;
            let (u0, u1) = (r.uniform_range(-0.15, 0.15), r.uniform_range(-0.15, 0.15));
            let (Ok(a2), Ok(b2)) = (
                plane.homography.apply(a + d * u0),
                plane.homography.apply(b + d * u1),
            ) else {
                continue;
            };
            let na = Point2::new(sigma * r.gaussian(), sigma * r.gaussian());
            let nb = Point2::new(sigma * r.gaussian(), sigma * r.gaussian());
            let (Ok(l), Ok(l_prime)) = (LineSegment::new(a, b), LineSegment::new(a2 + na, b2 + nb))
            else {
                continue;
            };
            lines.push(LineMatch::new(l, l_prime));
            line_planes.push(k);
            drawn += 1;
        }
    }

    let n = points.len();
    let count = (spec.outlier_fraction * n as f64).round() as usize;
    let mut r = CounterRng::new(spec.seed, STREAM_OUTLIERS);
    let mut scratch = Vec::new();
    let k = r.distinct(n, count, &mut scratch);
    let mut outliers: Vec<usize> = scratch[..k].to_vec();
    outliers.sort_unstable();
    let (w, h) = (
        spec.reference_size.width as f64,
        spec.reference_size.height as f64,
    );
    for &i in &outliers {
        points[i].p_prime = Point2::new(r.uniform_range(0.0, w), r.uniform_range(0.0, h));
    }

    Ok(Scene {
        set: CorrespondenceSet::new(points, lines, spec.target_size, spec.reference_size),
        ground_truth: spec.planes.iter().map(|p| p.homography).collect(),
        outliers,
        point_planes,
        line_planes,
    })
}

/// A homography taking the target corners to the reference corners shifted
/// by `shift` and each jittered uniformly by up to `jitter` pixels.
pub fn random_homography(
    seed: u64,
    size: ImageSize,
    shift: Point2,
    jitter: f64,
) -> Result<Homography> {
    let mut r = CounterRng::new(seed, STREAM_WARP);
    let matches: Vec<PointMatch> = size
        .corners()
        .iter()
        .map(|&c| {
            let j = Point2::new(
                r.uniform_range(-jitter, jitter),
                r.uniform_range(-jitter, jitter),
            );
            PointMatch::new(c, c + shift + j)
        })
        .collect();
    estimate_points_homography(&matches)
}

/// A homography dominated by perspective: a projective factor with unit area
/// scale at `anchor`, a small rotation about `anchor`, then `shift`. The
/// perspective vector has a random direction and a length uniform in
/// `[strength / 2, strength]`.
pub fn perspective_homography(
    seed: u64,
    anchor: Point2,
    shift: Point2,
    strength: f64,
) -> Homography {
    let mut r = CounterRng::new(seed, STREAM_WARP + 1);
    let phi = r.uniform_range(-core::f64::consts::PI, core::f64::consts::PI);
    let g = r.uniform_range(0.5 * strength, strength);
    let theta = r.uniform_range(-0.08, 0.08);
    let (s, c) = theta.sin_cos();
    let projective = Homography::from_rows([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [g * phi.cos(), g * phi.sin(), 1.0],
    ]);
    let rotation = Homography::from_rows([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]);
    Homography::translation(anchor.x + shift.x, anchor.y + shift.y)
        .compose(&rotation)
        .compose(&projective)
        .compose(&Homography::translation(-anchor.x, -anchor.y))
}

/// Point matches drawn from several similarity transforms. `groups` pairs
/// each transform with its number of matches; target points are uniform in
/// `extent`. Returns the matches and each match's group.
pub fn similarity_groups(
    seed: u64,
    groups: &[(SimilarityTransform, usize)],
    noise_sigma: f64,
    extent: ImageSize,
) -> (Vec<PointMatch>, Vec<usize>) {
    let mut r = CounterRng::new(seed, STREAM_SIMILARITY);
    let (w, h) = (extent.width as f64, extent.height as f64);
    let mut matches = Vec::new();
    let mut labels = Vec::new();
    for (g, &(s, n)) in groups.iter().enumerate() {
        for _ in 0..n {
            let p = Point2::new(r.uniform_range(0.0, w), r.uniform_range(0.0, h));
            let noise = Point2::new(noise_sigma * r.gaussian(), noise_sigma * r.gaussian());
            matches.push(PointMatch::new(p, s.apply(p) + noise));
            labels.push(g);
        }
    }
    (matches, labels)
}

/// Procedural textures defined over target coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Sum of oblique sinusoids, different per channel.
    Sinusoid,
    /// Gray checkerboard with the given square size, box-filtered over each
    /// pixel footprint.
    Checkerboard { period: f64 },
}

impl Texture {
    pub fn value(&self, p: Point2, channel: usize) -> f64 {
        match *self {
            Texture::Sinusoid => {
                use core::f64::consts::TAU;
                let c = channel as f64;
                128.0
                    + 45.0 * (TAU * (p.x / 37.0 + p.y / 53.0) + 0.9 * c).sin()
                    + 35.0 * (TAU * (p.x / 29.0 - p.y / 41.0) + 0.4 * c).cos()
                    + 20.0 * (TAU * (p.x / 13.0 + p.y / 17.0) - 0.6 * c).sin()
            }
            Texture::Checkerboard { period } => {
                let k = (p.x / period).floor() + (p.y / period).floor();
                if (k - 2.0 * (k / 2.0).floor()) < 0.5 {
                    40.0
                } else {
                    215.0
                }
            }
        }
    }

    fn supersampling(&self) -> usize {
        match self {
            Texture::Sinusoid => 1,
            Texture::Checkerboard { .. } => 4,
        }
    }
}

/// Renders the target from the texture directly and the reference by
/// pulling each reference pixel back through the plane whose region its
/// preimage falls in (the nearest region if none).
pub fn render_pair(spec: &SceneSpec, texture: Texture) -> Result<(Image, Image)> {
    spec.validate()?;
    let ss = texture.supersampling();
    let offsets: Vec<f64> = (0..ss).map(|k| (k as f64 + 0.5) / ss as f64).collect();
    let norm = 1.0 / (ss * ss) as f64;
    let pixel = |x: usize, y: usize, f: &dyn Fn(Point2) -> Option<Point2>| {
        let mut acc = [0.0f64; 3];
        for &dy in &offsets {
            for &dx in &offsets {
                if let Some(q) = f(Point2::new(x as f64 + dx, y as f64 + dy)) {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += texture.value(q, c);
                    }
                }
            }
        }
        acc.map(|a| (a * norm).clamp(0.0, 255.0) as f32)
    };
    let fill = |size: ImageSize, f: &dyn Fn(Point2) -> Option<Point2>| {
        let (w, h) = (size.width as usize, size.height as usize);
        let mut img = Image::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let px = pixel(x, y, f);
                for (c, &v) in px.iter().enumerate() {
                    img.set(x, y, c, v);
                }
            }
        }
        img
    };
    let target = fill(spec.target_size, &|p| Some(p));
    let inverses = spec
        .planes
        .iter()
        .map(|p| p.homography.inverse())
        .collect::<Result<Vec<_>>>()?;
    let preimage = |r: Point2| -> Option<Point2> {
        let mut best: Option<(f64, Point2)> = None;
        for (plane, inv) in spec.planes.iter().zip(&inverses) {
            let Ok(q) = inv.apply(r) else { continue };
            let d = polygon_distance(q, &plane.region);
            if d == 0.0 {
                return Some(q);
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, q));
            }
        }
        best.map(|(_, q)| q)
    };
    let reference = fill(spec.reference_size, &preimage);
    Ok((target, reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlt::estimate_global_homography;

    fn size() -> ImageSize {
        ImageSize::new(320, 240)
    }

    fn h_true() -> Homography {
        Homography::from_rows([[0.98, 0.03, 12.0], [-0.02, 1.01, -6.0], [1e-4, 2e-5, 1.0]])
    }

    #[test]
    fn noiseless_scene_recovers_its_homography() {
        let scene = generate(&SceneSpec::single_plane(4, size(), h_true())).unwrap();
        assert_eq!(scene.set.points.len(), 100);
        assert_eq!(scene.set.lines.len(), 20);
        let h = estimate_global_homography(&scene.set).unwrap();
        assert!(h.relative_error(&h_true()) < 1e-6);
        for m in &scene.set.lines {
            for end in [m.l.p0(), m.l.p1()] {
                assert!(m.l_prime.line().distance(h_true().apply(end).unwrap()) < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let mut spec =
            SceneSpec::two_plane(11, size(), h_true(), Homography::translation(-20.0, 3.0));
        spec.noise_sigma = 1.0;
        spec.outlier_fraction = 0.2;
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 12;
        assert_ne!(generate(&spec).unwrap().set, generate(&other).unwrap().set);
    }

    #[test]
    fn outlier_count_is_exact() {
        let mut spec = SceneSpec::single_plane(2, size(), h_true());
        spec.outlier_fraction = 0.3;
        spec.n_points = 55;
        let scene = generate(&spec).unwrap();
        assert_eq!(scene.outliers.len(), 17);
        let mut unique = scene.outliers.clone();
        unique.dedup();
        assert_eq!(unique.len(), 17);
    }

    #[test]
    fn two_plane_labels_follow_regions() {
        let spec = SceneSpec::two_plane(1, size(), h_true(), Homography::translation(-20.0, 3.0));
        let scene = generate(&spec).unwrap();
        for (m, &k) in scene.set.points.iter().zip(&scene.point_planes) {
            assert_eq!(m.p.x >= 160.0, k == 1);
            assert!(
                scene.ground_truth[k]
                    .apply(m.p)
                    .unwrap()
                    .distance(m.p_prime)
                    < 1e-9
            );
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SceneSpec::two_plane(1, size(), h_true(), h_true());
        spec.planes[1] = Plane::rect(h_true(), 100.0, 0.0, 320.0, 240.0);
        assert!(matches!(spec.validate(), Err(Error::InvalidInput(_))));
        let mut spec = SceneSpec::single_plane(1, size(), h_true());
        spec.planes[0].region = alloc::vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0)
        ];
        assert_eq!(generate(&spec), Err(Error::EmptyRegion));
        let spec = SceneSpec::single_plane(1, size(), Homography::scaling(1.0, 1e-5));
        assert!(spec.validate().is_err());
        // Entirely outside the reference.
        let spec = SceneSpec::single_plane(1, size(), Homography::translation(1000.0, 0.0));
        assert_eq!(generate(&spec), Err(Error::EmptyRegion));
    }

    #[test]
    fn noise_is_calibrated() {
        // Mean of a 2-D isotropic Gaussian's norm is sigma * sqrt(pi / 2).
        let sigma = 1.5;
        let mut total = 0.0;
        let mut n = 0;
        for seed in 0..50 {
            let mut spec = SceneSpec::single_plane(seed, size(), h_true());
            spec.noise_sigma = sigma;
            spec.n_lines = 0;
            let scene = generate(&spec).unwrap();
            for m in &scene.set.points {
                total += h_true().apply(m.p).unwrap().distance(m.p_prime);
                n += 1;
            }
        }
        let expected = sigma * (core::f64::consts::PI / 2.0).sqrt();
        assert!((total / n as f64 / expected - 1.0).abs() < 0.1);
    }

    #[test]
    fn similarity_groups_sizes() {
        let a = SimilarityTransform {
            scale: 1.0,
            theta: 0.3,
            tx: 0.0,
            ty: 0.0,
        };
        let (m, labels) = similarity_groups(
            3,
            &[(a, 6), (SimilarityTransform::identity(), 4)],
            0.0,
            size(),
        );
        assert_eq!(m.len(), 10);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 4);
        assert!(m[9].p.distance(m[9].p_prime) < 1e-12);
    }

    #[test]
    fn random_homography_moves_corners() {
        let h = random_homography(1, size(), Point2::new(100.0, 0.0), 5.0).unwrap();
        for c in size().corners() {
            let d = h.apply(c).unwrap() - (c + Point2::new(100.0, 0.0));
            assert!(d.x.abs() <= 5.0 + 1e-9 && d.y.abs() <= 5.0 + 1e-9);
        }
    }

    #[test]
    fn identity_pair_renders_equal_images() {
        let spec = SceneSpec::single_plane(1, ImageSize::new(40, 30), Homography::identity());
        for texture in [Texture::Sinusoid, Texture::Checkerboard { period: 8.0 }] {
            let (t, r) = render_pair(&spec, texture).unwrap();
            assert_eq!(t, r);
        }
    }

    #[test]
    fn translated_pair_is_shifted() {
        let spec = SceneSpec::single_plane(
            1,
            ImageSize::new(40, 30),
            Homography::translation(-6.0, 2.0),
        );
        let (t, r) = render_pair(&spec, Texture::Checkerboard { period: 5.0 }).unwrap();
        for y in 2..30 {
            for x in 0..34 {
                assert_eq!(r.pixel(x, y), t.pixel(x + 6, y - 2));
            }
        }
    }

    #[test]
    fn perspective_homography_has_unit_scale_at_anchor() {
        let anchor = Point2::new(300.0, 150.0);
        for seed in 0..10 {
            let h = perspective_homography(seed, anchor, Point2::new(-200.0, 0.0), 1e-3);
            let at = |p: Point2| h.apply(p).unwrap();
            assert!((at(anchor) - Point2::new(100.0, 150.0)).norm() < 1e-9);
            // Central-difference Jacobian determinant.
            let e = 1e-3;
            let dx =
                (at(anchor + Point2::new(e, 0.0)) - at(anchor - Point2::new(e, 0.0))) * (0.5 / e);
            let dy =
                (at(anchor + Point2::new(0.0, e)) - at(anchor - Point2::new(0.0, e))) * (0.5 / e);
            assert!((dx.x * dy.y - dx.y * dy.x - 1.0).abs() < 1e-6);
            let m = h.matrix();
            let c = m[(2, 0)].hypot(m[(2, 1)]);
            assert!(c > 1e-4, "{c}");
        }
    }
}
