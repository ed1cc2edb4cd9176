//! Point and line matches between a target/reference image pair, plus
//! RANSAC-based rejection of mismatched points.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::dlt::{estimate_points_homography, symmetric_transfer_error};
use crate::error::{Error, Result};
use crate::geometry::{Homography, LineSegment, Point2};
use crate::rng::CounterRng;

/// `p` in the target image matched to `p_prime` in the reference image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMatch {
    pub p: Point2,
    pub p_prime: Point2,
}

impl PointMatch {
    pub fn new(p: Point2, p_prime: Point2) -> Self {
        Self { p, p_prime }
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.p_prime, self.p)
    }
}

/// Matched line supports. Endpoints need not correspond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMatch {
    pub l: LineSegment,
    pub l_prime: LineSegment,
}

impl LineMatch {
    pub fn new(l: LineSegment, l_prime: LineSegment) -> Self {
        Self { l, l_prime }
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.l_prime, self.l)
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn max_dim(&self) -> f64 {
        self.width.max(self.height) as f64
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.width as f64 * 0.5, self.height as f64 * 0.5)
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (w, h) = (self.width as f64, self.height as f64);
        [
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h),
            Point2::new(0.0, h),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub points: Vec<PointMatch>,
    pub lines: Vec<LineMatch>,
    pub target_size: ImageSize,
    pub reference_size: ImageSize,
}

impl CorrespondenceSet {
    pub fn new(
        points: Vec<PointMatch>,
        lines: Vec<LineMatch>,
        target_size: ImageSize,
        reference_size: ImageSize,
    ) -> Self {
        Self {
            points,
            lines,
            target_size,
            reference_size,
        }
    }

    /// Number of DLT constraint rows the set provides (`2M + 2K`).
    pub fn constraint_rows(&self) -> usize {
        2 * self.points.len() + 2 * self.lines.len()
    }

    /// Reference and target roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            points: self.points.iter().map(PointMatch::swapped).collect(),
            lines: self.lines.iter().map(LineMatch::swapped).collect(),
            target_size: self.reference_size,
            reference_size: self.target_size,
        }
    }

    /// Checks finiteness and the `[-4 max_dim, 4 max_dim]` sanity box, listing
    /// every offending record.
    pub fn validate(&self) -> Result<()> {
        let bound = 4.0
            * self
                .target_size
                .max_dim()
                .max(self.reference_size.max_dim());
        let ok = |p: Point2| p.is_finite() && p.x.abs() <= bound && p.y.abs() <= bound;
        let mut problems: Vec<String> = Vec::new();
        if self.target_size.width == 0
            || self.target_size.height == 0
            || self.reference_size.width == 0
            || self.reference_size.height == 0
        {
            problems.push(String::from("image sizes must be positive"));
        }
        for (i, m) in self.points.iter().enumerate() {
            if !ok(m.p) || !ok(m.p_prime) {
                problems.push(format!("point {i} out of bounds or non-finite"));
            }
        }
        for (i, m) in self.lines.iter().enumerate() {
            let ends = [m.l.p0(), m.l.p1(), m.l_prime.p0(), m.l_prime.p1()];
            if !ends.iter().all(|&p| ok(p)) {
                problems.push(format!("line {i} out of bounds or non-finite"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidCorrespondences(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier threshold on the symmetric transfer error, in pixels.
    pub threshold: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            max_iters: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacOutcome {
    /// Indices into the input, ascending.
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    /// The minimal-sample homography that produced the consensus set.
    pub model: Homography,
}

fn canonical_order(matches: &[PointMatch]) -> Vec<usize> {
    let key = |m: &PointMatch| [m.p.x, m.p.y, m.p_prime.x, m.p_prime.y];
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(&matches[a]), key(&matches[b]));
        ka.iter()
            .zip(kb.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Minimal 4-point RANSAC scored by symmetric transfer error.
///
/// Samples are drawn over a canonical (coordinate-sorted) ordering of the
/// matches, so the consensus set does not depend on input order.
pub fn ransac_filter_points(
    matches: &[PointMatch],
    params: &RansacParams,
) -> Result<RansacOutcome> {
    if matches.len() < 4 {
        return Err(Error::InsufficientMatches {
            needed: 4,
            got: matches.len(),
        });
    }
    if !(params.threshold > 0.0) {
        return Err(Error::InvalidInput(String::from(
            "RANSAC threshold must be positive",
        )));
    }
    let order = canonical_order(matches);
    let mut rng = CounterRng::new(params.seed, 0x5241_4e53);
    let mut scratch = Vec::new();
    let mut best: Option<(usize, f64, Homography)> = None;

    let mut needed = params.max_iters.max(1);
    let mut iter = 0;
    while iter < needed {
        iter += 1;
        rng.distinct(matches.len(), 4, &mut scratch);
        let sample: Vec<PointMatch> = scratch[..4].iter().map(|&i| matches[order[i]]).collect();
        let Ok(model) = estimate_points_homography(&sample) else {
            continue;
        };
        let Ok(inv) = model.inverse() else {
            continue;
        };
        let mut count = 0;
        let mut cost = 0.0;
        for &i in &order {
            let e = symmetric_transfer_error(&model, &inv, &matches[i]);
            if e < params.threshold {
                count += 1;
                cost += e;
            } else {
                cost += params.threshold;
            }
        }
        let better = match &best {
            None => true,
            Some((c, s, _)) => count > *c || (count == *c && cost < *s),
        };
        if better {
            best = Some((count, cost, model));
            // Adaptive stop at 99.9% confidence of having drawn an all-inlier sample.
            let w = count as f64 / matches.len() as f64;
            let miss = 1.0 - w.powi(4);
            if miss <= 0.0 {
                break;
            }
            if miss < 1.0 {
                let k = (0.001f64.ln() / miss.ln()).ceil();
                if k.is_finite() && (k as usize) < needed {
                    needed = (k as usize).max(iter);
                }
            }
        }
    }

    let (count, _, model) = best.ok_or(Error::NoConsensus(0))?;
    if count < 4 {
        return Err(Error::NoConsensus(count));
    }
    let inv = model.inverse()?;
    let (inliers, outliers) = (0..matches.len())
        .partition(|&i| symmetric_transfer_error(&model, &inv, &matches[i]) < params.threshold);
    Ok(RansacOutcome {
        inliers,
        outliers,
        model,
    })
}

/// Keeps line matches whose target endpoints, mapped by `model`, lie within
/// `max_distance` of the reference line.
pub fn filter_lines(lines: &[LineMatch], model: &Homography, max_distance: f64) -> Vec<usize> {
    lines
        .iter()
        .enumerate()
        .filter(|(_, m)| {
            [m.l.p0(), m.l.p1()].iter().all(|&p| {
                model
                    .apply(p)
                    .map(|q| m.l_prime.line().distance(q) <= max_distance)
                    .unwrap_or(false)
            })
        })
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn h_true() -> Homography {
        Homography::from_rows([[1.02, 0.05, 30.0], [-0.03, 0.98, -12.0], [1e-4, -5e-5, 1.0]])
    }

    fn exact_matches(n: usize, seed: u64) -> Vec<PointMatch> {
        let h = h_true();
        let mut r = CounterRng::new(seed, 1);
        (0..n)
            .map(|_| {
                let p = Point2::new(r.uniform_range(0.0, 640.0), r.uniform_range(0.0, 480.0));
                PointMatch::new(p, h.apply(p).unwrap())
            })
            .collect()
    }

    #[test]
    fn all_exact_matches_are_inliers() {
        let m = exact_matches(50, 1);
        let out = ransac_filter_points(&m, &RansacParams::default()).unwrap();
        assert_eq!(out.inliers.len(), 50);
        assert!(out.outliers.is_empty());
    }

    #[test]
    fn single_displaced_match_is_rejected() {
        let mut m = exact_matches(50, 2);
        m[17].p_prime.x += 50.0;
        let out = ransac_filter_points(&m, &RansacParams::default()).unwrap();
        assert_eq!(out.outliers, alloc::vec![17]);
        assert_eq!(out.inliers.len(), 49);
    }

    #[test]
    fn too_few_matches() {
        let m = exact_matches(3, 3);
        assert!(matches!(
            ransac_filter_points(&m, &RansacParams::default()),
            Err(Error::InsufficientMatches { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn inlier_set_is_permutation_invariant() {
        let mut m = exact_matches(40, 4);
        let mut r = CounterRng::new(9, 9);
        for i in 0..12 {
            m[i * 3].p_prime.x += r.uniform_range(10.0, 80.0);
            m[i * 3].p_prime.y -= r.uniform_range(10.0, 80.0);
        }
        for mm in m.iter_mut() {
            mm.p_prime.x += r.uniform_range(-0.8, 0.8);
        }
        let params = RansacParams {
            max_iters: 300,
            ..RansacParams::default()
        };
        let a = ransac_filter_points(&m, &params).unwrap();
        let perm: Vec<usize> = (0..40).map(|i| (i * 7 + 3) % 40).collect();
        let shuffled: Vec<PointMatch> = perm.iter().map(|&i| m[i]).collect();
        let b = ransac_filter_points(&shuffled, &params).unwrap();
        let mut mapped: Vec<usize> = b.inliers.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        assert_eq!(a.inliers, mapped);
        let mut all: Vec<usize> = a.inliers.iter().chain(&a.outliers).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn line_filter_uses_model_distance() {
        let h = h_true();
        let seg = |a: Point2, b: Point2| LineSegment::new(a, b).unwrap();
        let (a, b) = (Point2::new(10.0, 20.0), Point2::new(200.0, 90.0));
        let good = LineMatch::new(seg(a, b), seg(h.apply(a).unwrap(), h.apply(b).unwrap()));
        let shifted = |p: Point2| h.apply(p).unwrap() + Point2::new(0.0, 12.0);
        let bad = LineMatch::new(seg(a, b), seg(shifted(a), shifted(b)));
        assert_eq!(filter_lines(&[good, bad, good], &h, 5.0), alloc::vec![0, 2]);
    }

    #[test]
    fn validation_reports_offenders() {
        let mut set = CorrespondenceSet::new(
            exact_matches(4, 5),
            Vec::new(),
            ImageSize::new(640, 480),
            ImageSize::new(640, 480),
        );
        assert!(set.validate().is_ok());
        set.points[2].p.x = 1e6;
        set.points[3].p_prime.y = f64::NAN;
        match set.validate() {
            Err(Error::InvalidCorrespondences(list)) => {
                assert_eq!(list.len(), 2);
                assert!(list[0].contains("point 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
