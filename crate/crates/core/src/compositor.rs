//! Canvas layout, texture mapping of both images through their final warps,
//! and intensity-average blending.
//!
//! All rendering pulls: every canvas pixel center is mapped back into a source
//! image and sampled there, so the output has no holes and each pixel depends
//! only on read-only inputs.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::ImageSize;
use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, SimilarityTransform};
use crate::grid::GridMesh;
use crate::moving_dlt::LocalWarpField;
use crate::raster::{Image, Mask, Sampling};
use crate::similarity::BlendWeights;

/// 64 megapixels.
pub const DEFAULT_CANVAS_CAP: usize = 64 << 20;

/// Output raster geometry. Canvas pixel `(u, v)` has its center at world
/// point `offset + (u + 0.5, v + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub offset: Point2,
}

impl Canvas {
    pub fn pixel_center(&self, u: usize, v: usize) -> Point2 {
        Point2::new(
            self.offset.x + u as f64 + 0.5,
            self.offset.y + v as f64 + 0.5,
        )
    }

    /// Canvas pixels whose centers fall inside the world box `[lo, hi]`, as
    /// half-open ranges; `None` when the box misses the canvas.
    fn pixel_range(&self, lo: Point2, hi: Point2) -> Option<((usize, usize), (usize, usize))> {
        let span = |lo: f64, hi: f64, off: f64, n: usize| {
            let a = (lo - off - 0.5).ceil().max(0.0);
            let b = (hi - off - 0.5).floor().min(n as f64 - 1.0);
            (a <= b).then(|| (a as usize, b as usize + 1))
        };
        Some((
            span(lo.x, hi.x, self.offset.x, self.width)?,
            span(lo.y, hi.y, self.offset.y, self.height)?,
        ))
    }
}

/// Integer bounding box of `points`. Fails on non-finite input and when the
/// area exceeds `cap` pixels.
pub fn compute_canvas(points: &[Point2], cap: usize) -> Result<Canvas> {
    if points.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(alloc::format!(
            "non-finite canvas point ({}, {})",
            p.x,
            p.y
        )));
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    // Rounding noise on an integer bound must not add a pixel row.
    let eps = 1e-6;
    let (x0, y0) = ((lo.x + eps).floor(), (lo.y + eps).floor());
    let (w, h) = ((hi.x - eps).ceil() - x0, (hi.y - eps).ceil() - y0);
    let too_large = |width: f64, height: f64| Error::CanvasTooLarge {
        width: width.min(usize::MAX as f64) as usize,
        height: height.min(usize::MAX as f64) as usize,
        cap,
    };
    if w * h > cap as f64 {
        return Err(too_large(w, h));
    }
    Ok(Canvas {
        width: w as usize,
        height: h as usize,
        offset: Point2::new(x0, y0),
    })
}

/// A warped image on a canvas. `folded` counts quads or cells that could not
/// be mapped consistently (rendered last, or skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedRaster {
    pub image: Image,
    pub mask: Mask,
    pub folded: usize,
}

impl WarpedRaster {
    fn empty(canvas: &Canvas, channels: usize) -> Self {
        Self {
            image: Image::new(canvas.width, canvas.height, channels),
            mask: Mask::new(canvas.width, canvas.height),
            folded: 0,
        }
    }

    fn write(&mut self, u: usize, v: usize, px: &[f64]) {
        for (c, &x) in px.iter().enumerate().take(self.image.channels) {
            self.image.set(u, v, c, x as f32);
        }
        self.mask.set(u, v, true);
    }
}

fn cross(a: Point2, b: Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn bilinear(quad: &[Point2; 4], s: f64, t: f64) -> Point2 {
    let [p00, p10, p01, p11] = *quad;
    p00 * ((1.0 - s) * (1.0 - t)) + p10 * (s * (1.0 - t)) + p01 * ((1.0 - s) * t) + p11 * (s * t)
}

fn outside_unit(s: f64, t: f64) -> f64 {
    (-s).max(s - 1.0).max(-t).max(t - 1.0).max(0.0)
}

/// Parameters `(s, t)` with `bilinear(quad, s, t) = q`, for a quad given as
/// top-left, top-right, bottom-left, bottom-right. Of the two roots the one
/// closest to the unit square is returned; `None` if no root exists.
pub fn inverse_bilinear(quad: &[Point2; 4], q: Point2) -> Option<(f64, f64)> {
    let [p00, p10, p01, p11] = *quad;
    let e = p10 - p00;
    let f = p01 - p00;
    let g = p00 - p10 + (p11 - p01);
    let h = q - p00;
    let scale = e.norm().max(f.norm());
    if !(scale > 0.0) {
        return None;
    }
    // h = s e + t f + s t g; eliminating s leaves a quadratic in t.
    let k2 = cross(g, f);
    let k1 = cross(e, f) + cross(h, g);
    let k0 = cross(h, e);
    let mut ts = [f64::NAN; 2];
    if k2.abs() < 1e-12 * scale * scale {
        if k1 != 0.0 {
            ts[0] = -k0 / k1;
        }
    } else {
        let disc = k1 * k1 - 4.0 * k0 * k2;
        if disc >= 0.0 {
            let r = -0.5 * (k1 + k1.signum() * disc.sqrt());
            ts[0] = r / k2;
            if r != 0.0 {
                ts[1] = k0 / r;
            }
        }
    }
    let s_of = |t: f64| {
        let den = e + g * t;
        if den.x.abs() > den.y.abs() {
            (h.x - f.x * t) / den.x
        } else {
            (h.y - f.y * t) / den.y
        }
    };
    let mut best: Option<(f64, f64)> = None;
    for t in ts.into_iter().filter(|t| t.is_finite()) {
        let s = s_of(t);
        if s.is_finite() && best.is_none_or(|(bs, bt)| outside_unit(s, t) < outside_unit(bs, bt)) {
            best = Some((s, t));
        }
    }
    let (mut s, mut t) = best.unwrap_or((0.5, 0.5));
    let iterations = if best.is_some() { 2 } else { 10 };
    for _ in 0..iterations {
        let r = bilinear(quad, s, t) - q;
        let ds = e + g * t;
        let dt = f + g * s;
        let det = cross(ds, dt);
        if det == 0.0 {
            break;
        }
        s -= cross(r, dt) / det;
        t -= cross(ds, r) / det;
    }
    let residual = bilinear(quad, s, t).distance(q);
    (s.is_finite() && t.is_finite() && residual < 1e-6 * (1.0 + scale)).then_some((s, t))
}

/// Shoelace area of a quad in top-left, top-right, bottom-left, bottom-right
/// order; positive for the undeformed orientation.
pub fn quad_area(quad: &[Point2; 4]) -> f64 {
    let ring = [quad[0], quad[1], quad[3], quad[2]];
    let mut a = 0.0;
    for k in 0..4 {
        a += cross(ring[k], ring[(k + 1) % 4]);
    }
    0.5 * a
}

/// The target image's piecewise bilinear warp: mesh vertices moved to
/// `vertices`, each quad interpolated bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshWarp {
    pub mesh: GridMesh,
    pub vertices: Vec<Point2>,
}

impl MeshWarp {
    pub fn new(mesh: GridMesh, vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() != mesh.vertex_count() {
            return Err(Error::InvalidInput(alloc::format!(
                "{} vertices for a mesh with {}",
                vertices.len(),
                mesh.vertex_count()
            )));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(alloc::string::String::from(
                "non-finite mesh vertex",
            )));
        }
        Ok(Self { mesh, vertices })
    }

    pub fn identity(mesh: GridMesh) -> Self {
        let vertices = mesh.vertices.clone();
        Self { mesh, vertices }
    }

    pub fn quad(&self, col: usize, row: usize) -> [Point2; 4] {
        self.mesh.cell_vertices(col, row).map(|i| self.vertices[i])
    }

    /// Maps a target point. Points off the mesh use the nearest cell's
    /// bilinear formula extrapolated.
    pub fn forward(&self, p: Point2) -> Point2 {
        let m = &self.mesh;
        let col = ((p.x / m.cell_w).floor().max(0.0) as usize).min(m.cols - 1);
        let row = ((p.y / m.cell_h).floor().max(0.0) as usize).min(m.rows - 1);
        let s = p.x / m.cell_w - col as f64;
        let t = p.y / m.cell_h - row as f64;
        bilinear(&self.quad(col, row), s, t)
    }

    /// Pre-image of a world point by exhaustive quad search.
    pub fn inverse(&self, c: Point2) -> Option<Point2> {
        let m = &self.mesh;
        for row in 0..m.rows {
            for col in 0..m.cols {
                if let Some((s, t)) = inverse_bilinear(&self.quad(col, row), c) {
                    if outside_unit(s, t) <= 1e-9 {
                        return Some(Point2::new(
                            (col as f64 + s) * m.cell_w,
                            (row as f64 + t) * m.cell_h,
                        ));
                    }
                }
            }
        }
        None
    }

    /// Cells whose deformed quad has non-positive area.
    pub fn folded_cells(&self) -> Vec<(usize, usize)> {
        let m = &self.mesh;
        (0..m.rows)
            .flat_map(|row| (0..m.cols).map(move |col| (col, row)))
            .filter(|&(col, row)| !(quad_area(&self.quad(col, row)) > 0.0))
            .collect()
    }
}

/// Texture-maps the target image through its mesh warp. Each canvas pixel
/// takes the first quad that contains it; folded quads are rendered after
/// all regular ones and counted in `folded`.
pub fn warp_target(
    image: &Image,
    warp: &MeshWarp,
    canvas: &Canvas,
    sampling: Sampling,
) -> Result<WarpedRaster> {
    let m = &warp.mesh;
    if (m.width() - image.width as f64).abs() > 1e-9
        || (m.height() - image.height as f64).abs() > 1e-9
    {
        return Err(Error::InvalidInput(alloc::format!(
            "mesh covers {}x{}, image is {}x{}",
            m.width(),
            m.height(),
            image.width,
            image.height
        )));
    }
    let mut out = WarpedRaster::empty(canvas, image.channels);
    let folded = warp.folded_cells();
    let regular = (0..m.rows)
        .flat_map(|row| (0..m.cols).map(move |col| (col, row)))
        .filter(|cell| !folded.contains(cell));
    let tol = 1e-7;
    for (col, row) in regular.chain(folded.iter().copied()) {
        let quad = warp.quad(col, row);
        let lo = quad
            .iter()
            .fold(quad[0], |a, p| Point2::new(a.x.min(p.x), a.y.min(p.y)));
        let hi = quad
            .iter()
            .fold(quad[0], |a, p| Point2::new(a.x.max(p.x), a.y.max(p.y)));
        let Some(((u0, u1), (v0, v1))) = canvas.pixel_range(lo, hi) else {
            continue;
        };
        for v in v0..v1 {
            for u in u0..u1 {
                if out.mask.get(u, v) {
                    continue;
                }
                let Some((s, t)) = inverse_bilinear(&quad, canvas.pixel_center(u, v)) else {
                    continue;
                };
                if outside_unit(s, t) > tol {
                    continue;
                }
                let src = Point2::new(
                    (col as f64 + s.clamp(0.0, 1.0)) * m.cell_w,
                    (row as f64 + t.clamp(0.0, 1.0)) * m.cell_h,
                );
                if let Some(px) = image.sample(src, sampling) {
                    out.write(u, v, &px);
                }
            }
        }
    }
    out.folded = folded.len();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct ReferenceCell {
    /// Index of the in-mesh cell whose `H_i` this cell uses.
    source: usize,
    target: Homography,
    target_inv: Homography,
    t_prime: Homography,
}

/// Piecewise-homographic warp of the reference image.
///
/// The target mesh is extended by whole cells until it covers the preimage
/// of the reference image under the global warp. Each (extended) cell `i`
/// owns the reference region `H_i(cell)` and moves it by `T'_i = H'_i H_i^-1`;
/// cells beyond the mesh reuse the nearest mesh cell's `H_i` and take their
/// similarity weight from the same ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWarpField {
    mesh: GridMesh,
    global_inv: Homography,
    col_lo: i64,
    row_lo: i64,
    cols: usize,
    rows: usize,
    local: Vec<Homography>,
    local_inv: Vec<Homography>,
    cells: Vec<Option<ReferenceCell>>,
}

impl ReferenceWarpField {
    /// `max_extension` bounds the number of extra cells on each side.
    pub fn new(
        mesh: &GridMesh,
        field: &LocalWarpField,
        global: &Homography,
        similarity: Option<(&SimilarityTransform, &BlendWeights)>,
        reference_size: ImageSize,
        max_extension: usize,
    ) -> Result<Self> {
        if field.per_cell.len() != mesh.cell_count() {
            return Err(Error::InvalidInput(alloc::format!(
                "warp field has {} cells, mesh has {}",
                field.per_cell.len(),
                mesh.cell_count()
            )));
        }
        let global_inv = global.inverse()?;
        let local_inv = field
            .per_cell
            .iter()
            .map(|h| h.inverse())
            .collect::<Result<Vec<_>>>()?;

        let ext = max_extension as i64;
        let (mut c0, mut c1, mut r0, mut r1) =
            (-ext, mesh.cols as i64 + ext, -ext, mesh.rows as i64 + ext);
        let (w, h) = (reference_size.width as f64, reference_size.height as f64);
        let steps = 16;
        let mut boundary = Vec::with_capacity(4 * steps);
        for k in 0..steps {
            let a = k as f64 / steps as f64;
            boundary.extend([
                Point2::new(a * w, 0.0),
                Point2::new(w, a * h),
                Point2::new((1.0 - a) * w, h),
                Point2::new(0.0, (1.0 - a) * h),
            ]);
        }
        let pre: Option<Vec<Point2>> = boundary.iter().map(|&r| global_inv.apply(r).ok()).collect();
        if let Some(pre) = pre {
            let (mut lo, mut hi) = (
                Point2::new(0.0, 0.0),
                Point2::new(mesh.width(), mesh.height()),
            );
            for p in &pre {
                lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
            let cell = |x: f64, size: f64, bound: i64| {
                ((x / size).floor().clamp(-1e9, 1e9) as i64).clamp(-ext, bound + ext)
            };
            c0 = cell(lo.x, mesh.cell_w, mesh.cols as i64) - 1;
            r0 = cell(lo.y, mesh.cell_h, mesh.rows as i64) - 1;
            c1 = cell(hi.x, mesh.cell_w, mesh.cols as i64) + 2;
            r1 = cell(hi.y, mesh.cell_h, mesh.rows as i64) + 2;
            c0 = c0.clamp(-ext, 0);
            r0 = r0.clamp(-ext, 0);
            c1 = c1.clamp(mesh.cols as i64, mesh.cols as i64 + ext);
            r1 = r1.clamp(mesh.rows as i64, mesh.rows as i64 + ext);
        }
        let (cols, rows) = ((c1 - c0) as usize, (r1 - r0) as usize);

        let sm = similarity.map(|(s, w)| (*s.to_homography().matrix(), w));
        let mut cells = Vec::with_capacity(cols * rows);
        for r in r0..r1 {
            for c in c0..c1 {
                let mc = c.clamp(0, mesh.cols as i64 - 1) as usize;
                let mr = r.clamp(0, mesh.rows as i64 - 1) as usize;
                let source = mesh.cell_index(mc, mr);
                let h = &field.per_cell[source];
                let target = match &sm {
                    None => *h,
                    Some((s, weights)) => {
                        let xi = if c == mc as i64 && r == mr as i64 {
                            weights.xi[source]
                        } else {
                            let center = Point2::new(
                                (c as f64 + 0.5) * mesh.cell_w,
                                (r as f64 + 0.5) * mesh.cell_h,
                            );
                            weights.xi_at_point(center)
                        };
                        Homography::new(h.matrix() * (1.0 - xi) + s * xi)
                    }
                };
                let t_prime = if sm.is_some() {
                    target.compose(&local_inv[source])
                } else {
                    Homography::identity()
                };
                let cell = target.inverse().ok().map(|target_inv| ReferenceCell {
                    source,
                    target,
                    target_inv,
                    t_prime,
                });
                cells.push(cell);
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            global_inv,
            col_lo: c0,
            row_lo: r0,
            cols,
            rows,
            local: field.per_cell.clone(),
            local_inv,
            cells,
        })
    }

    /// Extended grid size in cells.
    pub fn grid_size(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    fn cell_of(&self, q: Point2) -> usize {
        let clamp = |x: f64, lo: i64, n: usize| {
            let k = x.floor().clamp(-1e12, 1e12) as i64;
            (k.clamp(lo, lo + n as i64 - 1) - lo) as usize
        };
        let c = clamp(q.x / self.mesh.cell_w, self.col_lo, self.cols);
        let r = clamp(q.y / self.mesh.cell_h, self.row_lo, self.rows);
        r * self.cols + c
    }

    fn cell_box(&self, index: usize) -> (Point2, Point2) {
        let c = self.col_lo + (index % self.cols) as i64;
        let r = self.row_lo + (index / self.cols) as i64;
        let (cw, ch) = (self.mesh.cell_w, self.mesh.cell_h);
        (
            Point2::new(c as f64 * cw, r as f64 * ch),
            Point2::new((c + 1) as f64 * cw, (r + 1) as f64 * ch),
        )
    }

    /// The cell owning reference point `r`: start from the global preimage,
    /// then follow the local preimage until it settles.
    fn owner(&self, r: Point2) -> Option<usize> {
        let mut cell = self.cell_of(self.global_inv.apply(r).ok()?);
        for _ in 0..4 {
            let source = self.cells[cell]
                .as_ref()
                .map_or_else(|| self.mesh.cell_index(0, 0), |c| c.source);
            let next = self.cell_of(self.local_inv[source].apply(r).ok()?);
            if next == cell {
                break;
            }
            cell = next;
        }
        Some(cell)
    }

    /// `T'_i` of the cell owning `r`.
    pub fn t_prime_at(&self, r: Point2) -> Option<&Homography> {
        self.cells[self.owner(r)?].as_ref().map(|c| &c.t_prime)
    }

    /// `T'_i r` for the cell owning `r`.
    pub fn forward(&self, r: Point2) -> Option<Point2> {
        self.t_prime_at(r)?.apply(r).ok()
    }

    /// `T'_i` of in-mesh cell `(col, row)`.
    pub fn t_prime(&self, col: usize, row: usize) -> Option<&Homography> {
        let c = (col as i64 - self.col_lo) as usize;
        let r = (row as i64 - self.row_lo) as usize;
        self.cells[r * self.cols + c].as_ref().map(|c| &c.t_prime)
    }
}

/// Renders the reference image through its piecewise warp. A canvas pixel
/// `x` belongs to cell `i` when `q = H'_i^-1 x` lies in that cell (with half
/// a pixel of slack to close seams); it samples the reference at `H_i q`.
pub fn warp_reference(
    image: &Image,
    field: &ReferenceWarpField,
    canvas: &Canvas,
    sampling: Sampling,
) -> WarpedRaster {
    let mut out = WarpedRaster::empty(canvas, image.channels);
    let slack = 0.5;
    let mut skipped = 0;
    for (index, cell) in field.cells.iter().enumerate() {
        let Some(cell) = cell else {
            skipped += 1;
            continue;
        };
        let (lo, hi) = field.cell_box(index);
        let (lo, hi) = (
            lo - Point2::new(slack, slack),
            hi + Point2::new(slack, slack),
        );
        let corners = [lo, Point2::new(hi.x, lo.y), Point2::new(lo.x, hi.y), hi];
        let mapped: Option<Vec<Point2>> = corners
            .iter()
            .map(|&p| {
                let v = cell.target.matrix() * p.homogeneous();
                (v.z > 1e-12).then(|| Point2::new(v.x / v.z, v.y / v.z))
            })
            .collect();
        let Some(mapped) = mapped else {
            // The cell straddles the horizon of its warp.
            skipped += 1;
            continue;
        };
        let wlo = mapped
            .iter()
            .fold(mapped[0], |a, p| Point2::new(a.x.min(p.x), a.y.min(p.y)));
        let whi = mapped
            .iter()
            .fold(mapped[0], |a, p| Point2::new(a.x.max(p.x), a.y.max(p.y)));
        let Some(((u0, u1), (v0, v1))) = canvas.pixel_range(wlo, whi) else {
            continue;
        };
        let h = &field.local[cell.source];
        for v in v0..v1 {
            for u in u0..u1 {
                if out.mask.get(u, v) {
                    continue;
                }
                let Ok(q) = cell.target_inv.apply(canvas.pixel_center(u, v)) else {
                    continue;
                };
                if q.x < lo.x || q.x > hi.x || q.y < lo.y || q.y > hi.y {
                    continue;
                }
                let Ok(r) = h.apply(q) else {
                    continue;
                };
                if let Some(px) = image.sample(r, sampling) {
                    out.write(u, v, &px);
                }
            }
        }
    }
    out.folded = skipped;
    out
}

/// Per-channel mean wherever any raster is valid, as 8-bit RGBA values:
/// clamped to `[0, 255]`, rounded, alpha 255. Uncovered pixels are
/// transparent black. Gray rasters are expanded to RGB.
///
/// Panics if the rasters do not share one canvas.
pub fn blend_average(rasters: &[&WarpedRaster]) -> Image {
    let (w, h) = rasters
        .first()
        .map_or((0, 0), |r| (r.image.width, r.image.height));
    for r in rasters {
        assert!(
            r.image.width == w && r.image.height == h && r.mask.width == w && r.mask.height == h,
            "rasters on different canvases"
        );
    }
    let mut out = Image::new(w, h, 4);
    for y in 0..h {
        for x in 0..w {
            let mut sum = [0.0f64; 3];
            let mut n = 0usize;
            for r in rasters.iter().filter(|r| r.mask.get(x, y)) {
                let px = r.image.pixel(x, y);
                for (c, s) in sum.iter_mut().enumerate() {
                    *s += px[if px.len() >= 3 { c } else { 0 }] as f64;
                }
                n += 1;
            }
            if n == 0 {
                continue;
            }
            for (c, s) in sum.iter().enumerate() {
                out.set(x, y, c, (s / n as f64).clamp(0.0, 255.0).round() as f32);
            }
            out.set(x, y, 3, 255.0);
        }
    }
    out
}
