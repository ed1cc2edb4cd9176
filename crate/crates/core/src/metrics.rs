//! Alignment quality: windowed correlation over the overlap and mean
//! geometric error of the warped correspondences.

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::{LineMatch, PointMatch};
use crate::error::{Error, Result};
use crate::geometry::{ImplicitLine, Point2};
use crate::raster::{GrayImage, Mask};

/// Normalized cross-correlation of the 3x3 windows centered at `(x, y)`.
///
/// Constant windows: two constants with equal means give 1, otherwise 0.
pub fn ncc_window(a: &GrayImage, b: &GrayImage, x: usize, y: usize) -> Result<f64> {
    let inside = |g: &GrayImage| x >= 1 && y >= 1 && x + 1 < g.width && y + 1 < g.height;
    if !inside(a) || !inside(b) {
        return Err(Error::WindowOutOfBounds { x, y });
    }
    let window = |g: &GrayImage| {
        let mut w = [0.0; 9];
        for dy in 0..3 {
            for dx in 0..3 {
                w[dy * 3 + dx] = g.get(x + dx - 1, y + dy - 1);
            }
        }
        w
    };
    let (wa, wb) = (window(a), window(b));
    let mean = |w: &[f64; 9]| w.iter().sum::<f64>() / 9.0;
    let (ma, mb) = (mean(&wa), mean(&wb));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for k in 0..9 {
        let (da, db) = (wa[k] - ma, wb[k] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    let flat = |s: f64| s <= 1e-18;
    Ok(match (flat(saa), flat(sbb)) {
        (true, true) if (ma - mb).abs() < 1e-9 => 1.0,
        (true, _) | (_, true) => 0.0,
        _ => (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0),
    })
}

/// `sqrt(mean((1 - NCC)^2))` over `mask` eroded by one pixel, so every window
/// lies inside the valid region of both rasters. Returns the metric and the
/// number of pixels it averaged over.
pub fn correlation_metric(a: &GrayImage, b: &GrayImage, mask: &Mask) -> Result<(f64, usize)> {
    if a.width != b.width
        || a.height != b.height
        || mask.width != a.width
        || mask.height != a.height
    {
        return Err(Error::InvalidInput(alloc::string::String::from(
            "correlation needs rasters and mask of one size",
        )));
    }
    let eroded = mask.eroded();
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            if eroded.get(x, y) {
                let d = 1.0 - ncc_window(a, b, x, y)?;
                sum += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(((sum / n as f64).sqrt(), n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricError {
    pub err_p: f64,
    pub err_l: f64,
    pub err_mg: f64,
    pub m_points: usize,
    pub k_lines: usize,
}

/// Point transfer error, endpoint-to-line error, and their count-weighted mean.
/// `f` maps target coordinates into the frame of `p'` and `l'`; correspondences
/// it cannot map are an error.
pub fn mean_geometric_error(
    f: impl Fn(Point2) -> Option<Point2>,
    points: &[PointMatch],
    lines: &[LineMatch],
) -> Result<GeometricError> {
    mean_geometric_error_framed(f, points, lines, |j, _| *lines[j].l_prime.line())
}

/// As [`mean_geometric_error`], with the partner line of each target endpoint
/// chosen by `line_for(line index, endpoint)`.
pub fn mean_geometric_error_framed(
    f: impl Fn(Point2) -> Option<Point2>,
    points: &[PointMatch],
    lines: &[LineMatch],
    line_for: impl Fn(usize, Point2) -> ImplicitLine,
) -> Result<GeometricError> {
    let (m, k) = (points.len(), lines.len());
    if m + k == 0 {
        return Err(Error::EmptyCorrespondences);
    }
    let map = |p: Point2| f(p).ok_or(Error::OutsideMesh { x: p.x, y: p.y });
    let mut sum_p = 0.0;
    for pm in points {
        sum_p += map(pm.p)?.distance(pm.p_prime);
    }
    let mut sum_l = 0.0;
    for (j, lm) in lines.iter().enumerate() {
        for end in [lm.l.p0(), lm.l.p1()] {
            sum_l += line_for(j, end).distance(map(end)?);
        }
    }
    let err_p = if m > 0 { sum_p / m as f64 } else { 0.0 };
    let err_l = if k > 0 { sum_l / (2 * k) as f64 } else { 0.0 };
    Ok(GeometricError {
        err_p,
        err_l,
        err_mg: (sum_p + sum_l) / (m + 2 * k) as f64,
        m_points: m,
        k_lines: k,
    })
}

/// Everything reported for one stitched pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub cor: f64,
    pub err_p: f64,
    pub err_l: f64,
    pub err_mg: f64,
    pub n_overlap: usize,
    pub m_points: usize,
    pub k_lines: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LineSegment;
    use crate::rng::CounterRng;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn from_window(w: [f64; 9]) -> GrayImage {
        GrayImage::from_fn(3, 3, |x, y| w[y * 3 + x])
    }

    #[test]
    fn ncc_examples() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let a = from_window(w);
        assert!((ncc_window(&a, &a, 1, 1).unwrap() - 1.0).abs() < 1e-12);
        let mirrored = from_window(w.map(|x| 2.0 * 5.0 - x));
        assert!((ncc_window(&a, &mirrored, 1, 1).unwrap() + 1.0).abs() < 1e-12);
        let c = from_window([50.0; 9]);
        assert_eq!(ncc_window(&c, &c, 1, 1).unwrap(), 1.0);
        assert_eq!(ncc_window(&c, &from_window([60.0; 9]), 1, 1).unwrap(), 0.0);
        assert_eq!(ncc_window(&c, &a, 1, 1).unwrap(), 0.0);
        assert!(matches!(
            ncc_window(&a, &a, 0, 1),
            Err(Error::WindowOutOfBounds { .. })
        ));
    }

    fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut r = CounterRng::new(seed, 1);
        GrayImage::from_fn(w, h, |_, _| r.uniform_range(0.0, 255.0))
    }

    #[test]
    fn cor_examples() {
        let a = noise(12, 10, 1);
        let mask = Mask::filled(12, 10);
        let (cor, n) = correlation_metric(&a, &a, &mask).unwrap();
        assert!(cor < 1e-7, "{cor}");
        assert_eq!(n, 80);
        // A striped image against its negation has NCC = -1 in every window.
        let s = GrayImage::from_fn(12, 10, |x, _| (x % 2) as f64 * 10.0);
        let neg = GrayImage::from_fn(12, 10, |x, _| 10.0 - (x % 2) as f64 * 10.0);
        let (cor, _) = correlation_metric(&s, &neg, &mask).unwrap();
        assert!((cor - 2.0).abs() < 1e-12);
        assert_eq!(
            correlation_metric(&a, &a, &Mask::new(12, 10)),
            Err(Error::EmptyOverlap)
        );
    }

    #[test]
    fn cor_matches_brute_force() {
        let (a, b) = (noise(20, 15, 2), noise(20, 15, 3));
        let mut mask = Mask::filled(20, 15);
        for x in 0..7 {
            for y in 0..15 {
                mask.set(x, y, false);
            }
        }
        let (cor, n) = correlation_metric(&a, &b, &mask).unwrap();
        // Oracle: explicit windows over pixels whose full neighbourhood is masked.
        let mut vals = Vec::new();
        for y in 1..14 {
            for x in 8..19 {
                let wa: Vec<f64> = (0..9)
                    .map(|k| a.get(x + k % 3 - 1, y + k / 3 - 1))
                    .collect();
                let wb: Vec<f64> = (0..9)
                    .map(|k| b.get(x + k % 3 - 1, y + k / 3 - 1))
                    .collect();
                let (ma, mb) = (wa.iter().sum::<f64>() / 9.0, wb.iter().sum::<f64>() / 9.0);
                let num: f64 = wa.iter().zip(&wb).map(|(p, q)| (p - ma) * (q - mb)).sum();
                let da: f64 = wa.iter().map(|p| (p - ma).powi(2)).sum::<f64>().sqrt();
                let db: f64 = wb.iter().map(|q| (q - mb).powi(2)).sum::<f64>().sqrt();
                vals.push((1.0 - num / (da * db)).powi(2));
            }
        }
        assert_eq!(n, vals.len());
        let oracle = (vals.iter().sum::<f64>() / vals.len() as f64).sqrt();
        assert!((cor - oracle).abs() < 1e-12);
        let (rev, _) = correlation_metric(&b, &a, &mask).unwrap();
        assert!((rev - cor).abs() < 1e-12);
    }

    fn seg(a: (f64, f64), b: (f64, f64)) -> LineSegment {
        LineSegment::new(Point2::new(a.0, a.1), Point2::new(b.0, b.1)).unwrap()
    }

    #[test]
    fn geometric_error_examples() {
        let id = |p: Point2| Some(p);
        let p = Point2::new(1.0, 1.0);
        let e = mean_geometric_error(id, &[PointMatch::new(p, p)], &[]).unwrap();
        assert_eq!((e.err_p, e.err_l, e.err_mg), (0.0, 0.0, 0.0));

        let e = mean_geometric_error(id, &[PointMatch::new(p, p + Point2::new(3.0, 4.0))], &[])
            .unwrap();
        assert_eq!((e.err_p, e.err_l, e.err_mg), (5.0, 0.0, 5.0));

        let points = [
            PointMatch::new(p, p + Point2::new(1.0, 0.0)),
            PointMatch::new(p, p + Point2::new(0.0, 1.0)),
        ];
        let line = LineMatch::new(seg((0.0, 0.0), (10.0, 0.0)), seg((0.0, 2.0), (10.0, 2.0)));
        let e = mean_geometric_error(id, &points, &[line]).unwrap();
        assert!((e.err_p - 1.0).abs() < 1e-12 && (e.err_l - 2.0).abs() < 1e-12);
        assert!((e.err_mg - 1.5).abs() < 1e-12);

        assert_eq!(
            mean_geometric_error(id, &[], &[]),
            Err(Error::EmptyCorrespondences)
        );
    }

    proptest! {
        #[test]
        fn err_mg_between_components_and_translation_invariant(seed in 0u64..1000, tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
            let mut r = CounterRng::new(seed, 2);
            let mut pt = || Point2::new(r.uniform_range(0.0, 100.0), r.uniform_range(0.0, 100.0));
            let points: Vec<PointMatch> = (0..5).map(|_| PointMatch::new(pt(), pt())).collect();
            let lines: Vec<LineMatch> = (0..3)
                .filter_map(|_| Some(LineMatch::new(LineSegment::new(pt(), pt()).ok()?, LineSegment::new(pt(), pt()).ok()?)))
                .collect();
            prop_assume!(!lines.is_empty());
            let f = |p: Point2| Some(Point2::new(1.1 * p.x + 0.1 * p.y, 0.9 * p.y - 0.05 * p.x));
            let e = mean_geometric_error(f, &points, &lines).unwrap();
            prop_assert!(e.err_mg >= e.err_p.min(e.err_l) - 1e-12 && e.err_mg <= e.err_p.max(e.err_l) + 1e-12);

            let t = Point2::new(tx, ty);
            let shifted_points: Vec<PointMatch> = points.iter().map(|m| PointMatch::new(m.p, m.p_prime + t)).collect();
            let shifted_lines: Vec<LineMatch> = lines
                .iter()
                .map(|m| LineMatch::new(m.l, LineSegment::new(m.l_prime.p0() + t, m.l_prime.p1() + t).unwrap()))
                .collect();
            let g = |p: Point2| f(p).map(|q| q + t);
            let e2 = mean_geometric_error(g, &shifted_points, &shifted_lines).unwrap();
            prop_assert!((e.err_p - e2.err_p).abs() < 1e-9);
            prop_assert!((e.err_l - e2.err_l).abs() < 1e-9);
            prop_assert!((e.err_mg - e2.err_mg).abs() < 1e-9);
        }
    }

    #[test]
    fn err_p_grows_with_noise() {
        let mut means = Vec::new();
        for sigma in [0.5, 1.0, 2.0] {
            let mut total = 0.0;
            for seed in 0..20 {
                let mut r = CounterRng::new(seed, 3);
                let points: Vec<PointMatch> = (0..50)
                    .map(|_| {
                        let p =
                            Point2::new(r.uniform_range(0.0, 100.0), r.uniform_range(0.0, 100.0));
                        PointMatch::new(
                            p,
                            p + Point2::new(sigma * r.gaussian(), sigma * r.gaussian()),
                        )
                    })
                    .collect();
                total += mean_geometric_error(Some, &points, &[]).unwrap().err_p;
            }
            means.push(total / 20.0);
        }
        assert!(means[0] < means[1] && means[1] < means[2]);
    }
}
