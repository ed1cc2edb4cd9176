//! The full stitching pipeline: outlier rejection, stage-one warp (global or
//! moving DLT), similarity constraint, mesh refinement, composition and
//! metrics. Also sequential multi-image stitching.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::compositor::{
    blend_average, compute_canvas, warp_reference, warp_target, Canvas, MeshWarp,
    ReferenceWarpField, WarpedRaster, DEFAULT_CANVAS_CAP,
};
use crate::correspondence::{
    filter_lines, ransac_filter_points, CorrespondenceSet, ImageSize, LineMatch, PointMatch,
    RansacParams,
};
use crate::dlt::{estimate_global_homography, estimate_points_homography};
use crate::error::{Error, Result};
use crate::geometry::{Homography, LineSegment, Point2, SimilarityTransform};
use crate::grid::GridMesh;
use crate::metrics::{
    correlation_metric, mean_geometric_error, mean_geometric_error_framed, GeometricError,
    MetricReport,
};
use crate::moving_dlt::{estimate_local_warp, LocalWarpField, DEFAULT_ETA, DEFAULT_SIGMA};
use crate::optimizer::{
    cut_line_by_grid, quad_salience, refine, EnergyWeights, LineFrames, OptimizerInput,
    Triangulation,
};
use crate::raster::{Image, Mask, Sampling};
use crate::similarity::{
    apply_similarity_constraint, compute_blend_weights, local_scale_change_at, select_similarity,
    AdjustedWarpPair, BlendWeights, SimilarityParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WarpMode {
    /// One homography for every cell.
    Global,
    /// Moving DLT per cell.
    #[default]
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: WarpMode,
    /// Cells along the shorter image side.
    pub mesh_cells: usize,
    pub sigma: f64,
    pub eta: f64,
    pub weights: EnergyWeights,
    pub similarity: bool,
    pub refine: bool,
    /// Use line correspondences for estimation and refinement. Metrics always
    /// include them.
    pub use_lines: bool,
    pub collinearity_iters: usize,
    pub ransac: RansacParams,
    /// Distance of mapped target endpoints to the reference line above which
    /// a line match is discarded.
    pub line_threshold: f64,
    pub similarity_params: SimilarityParams,
    pub triangulation: Triangulation,
    pub sampling: Sampling,
    pub canvas_cap: usize,
    /// Extra reference cells allowed on each side of the mesh.
    pub max_extension: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: WarpMode::Local,
            mesh_cells: 40,
            sigma: DEFAULT_SIGMA,
            eta: DEFAULT_ETA,
            weights: EnergyWeights::default(),
            similarity: true,
            refine: true,
            use_lines: true,
            collinearity_iters: 1,
            ransac: RansacParams::default(),
            line_threshold: 10.0,
            similarity_params: SimilarityParams::default(),
            triangulation: Triangulation::default(),
            sampling: Sampling::Bilinear,
            canvas_cap: DEFAULT_CANVAS_CAP,
            max_extension: 200,
        }
    }
}

impl PipelineConfig {
    /// Routes one seed to every randomized stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ransac.seed = seed;
        self.similarity_params.seed = seed;
        self
    }
}

/// Everything computed before composition, in the output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub mesh: GridMesh,
    /// Correspondences that survived outlier rejection.
    pub filtered: CorrespondenceSet,
    pub point_inliers: Vec<usize>,
    pub line_inliers: Vec<usize>,
    pub global: Homography,
    pub field: LocalWarpField,
    pub similarity: Option<SimilarityTransform>,
    pub weights: Option<BlendWeights>,
    pub adjusted: AdjustedWarpPair,
    pub reference_field: ReferenceWarpField,
    /// Per-cell flag: the cell center maps into the reference image.
    pub overlap_cells: Vec<bool>,
    pub prewarp: Vec<Point2>,
    pub vertices: Vec<Point2>,
    pub energies: Vec<f64>,
    /// Filtered correspondences with the reference side moved by `T'`.
    pub world_points: Vec<PointMatch>,
    pub world_lines: Vec<LineMatch>,
    /// Per-cell partners of `world_lines`.
    pub line_frames: Vec<LineFrames>,
    pub notes: Vec<String>,
}

impl Registration {
    pub fn mesh_warp(&self) -> MeshWarp {
        MeshWarp {
            mesh: self.mesh.clone(),
            vertices: self.vertices.clone(),
        }
    }

    /// Mean geometric error of the final warp in the output frame.
    pub fn geometric_error(&self) -> Result<GeometricError> {
        let warp = self.mesh_warp();
        mean_geometric_error_framed(
            |p| Some(warp.forward(p)),
            &self.world_points,
            &self.world_lines,
            |j, end| {
                let (col, row) = self.mesh.nearest_cell(end);
                let own = *self.world_lines[j].l_prime.line();
                self.line_frames[j]
                    .line_in(self.mesh.cell_index(col, row))
                    .unwrap_or(own)
            },
        )
    }

    /// Mean `|log det J|` of the stage-one target warps over cells outside
    /// the overlap, where `det J` is the local area scale of `H'_i` at the
    /// cell center. Cells whose scale is not positive are skipped.
    pub fn scale_distortion(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &overlap) in self.overlap_cells.iter().enumerate() {
            if overlap {
                continue;
            }
            let h = &self.adjusted.target_warps[i];
            if let Ok(j) = local_scale_change_at(h, self.mesh.cell_centers[i]) {
                if j > 0.0 {
                    sum += j.ln().abs();
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchResult {
    pub image: Image,
    pub canvas: Canvas,
    pub report: MetricReport,
    pub scale_distortion: f64,
    pub registration: Registration,
    pub target: WarpedRaster,
    pub reference: WarpedRaster,
}

fn check_size(image: &Image, size: ImageSize, which: &str) -> Result<()> {
    if image.width != size.width as usize || image.height != size.height as usize {
        return Err(Error::InvalidInput(alloc::format!(
            "{which} image is {}x{} but correspondences declare {}x{}",
            image.width,
            image.height,
            size.width,
            size.height
        )));
    }
    Ok(())
}

fn outlier_rejection(
    set: &CorrespondenceSet,
    config: &PipelineConfig,
    notes: &mut Vec<String>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if set.points.len() < 4 {
        notes.push(alloc::format!(
            "{} point matches: outlier rejection skipped",
            set.points.len()
        ));
        return Ok((
            (0..set.points.len()).collect(),
            (0..set.lines.len()).collect(),
        ));
    }
    let outcome = ransac_filter_points(&set.points, &config.ransac)?;
    let inliers: Vec<PointMatch> = outcome.inliers.iter().map(|&i| set.points[i]).collect();
    let model = estimate_points_homography(&inliers).unwrap_or(outcome.model);
    let lines = filter_lines(&set.lines, &model, config.line_threshold);
    if lines.len() < set.lines.len() {
        notes.push(alloc::format!(
            "{} line matches rejected",
            set.lines.len() - lines.len()
        ));
    }
    Ok((outcome.inliers, lines))
}

/// Stage-one vertex positions: each vertex averaged over `H'_i` of the
/// cells around it.
pub fn prewarp_vertices(mesh: &GridMesh, target_warps: &[Homography]) -> Result<Vec<Point2>> {
    let mut out = Vec::with_capacity(mesh.vertex_count());
    for row in 0..=mesh.rows {
        for col in 0..=mesh.cols {
            let v = mesh.vertices[mesh.vertex_index(col, row)];
            let mut sum = Point2::new(0.0, 0.0);
            let mut n = 0.0;
            for r in row.saturating_sub(1)..(row + 1).min(mesh.rows) {
                for c in col.saturating_sub(1)..(col + 1).min(mesh.cols) {
                    sum = sum + target_warps[mesh.cell_index(c, r)].apply(v)?;
                    n += 1.0;
                }
            }
            out.push(sum * (1.0 / n));
        }
    }
    Ok(out)
}

/// Runs every stage up to, but excluding, rendering.
pub fn register(
    set: &CorrespondenceSet,
    target_gray: Option<&crate::raster::GrayImage>,
    config: &PipelineConfig,
) -> Result<Registration> {
    set.validate().map_err(|e| e.in_stage("input"))?;
    let mut notes = Vec::new();
    let (point_inliers, line_inliers) =
        outlier_rejection(set, config, &mut notes).map_err(|e| e.in_stage("ransac"))?;
    let filtered = CorrespondenceSet::new(
        point_inliers.iter().map(|&i| set.points[i]).collect(),
        line_inliers.iter().map(|&i| set.lines[i]).collect(),
        set.target_size,
        set.reference_size,
    );
    let estimation = if config.use_lines {
        filtered.clone()
    } else {
        CorrespondenceSet {
            lines: Vec::new(),
            ..filtered.clone()
        }
    };

    let global = estimate_global_homography(&estimation).map_err(|e| e.in_stage("global warp"))?;
    let mesh = GridMesh::with_density(set.target_size, config.mesh_cells)
        .map_err(|e| e.in_stage("mesh"))?;
    let field = match config.mode {
        WarpMode::Global => LocalWarpField::constant(&mesh, global),
        WarpMode::Local => estimate_local_warp(&estimation, &mesh, config.sigma, config.eta)
            .map_err(|e| e.in_stage("local warp"))?,
    };

    let overlap_cells: Vec<bool> = mesh
        .cell_centers
        .iter()
        .map(|&c| {
            global
                .apply(c)
                .is_ok_and(|q| set.reference_size.contains(q))
        })
        .collect();

    let mut similarity = None;
    let mut weights = None;
    if config.similarity {
        match select_similarity(&filtered.points, &config.similarity_params) {
            Ok(candidate) => {
                let inside: Vec<Point2> = mesh
                    .cell_centers
                    .iter()
                    .zip(&overlap_cells)
                    .filter(|(_, &o)| o)
                    .map(|(&c, _)| c)
                    .collect();
                let centroid = if inside.is_empty() {
                    set.target_size.center()
                } else {
                    inside.iter().fold(Point2::new(0.0, 0.0), |s, &p| s + p)
                        * (1.0 / inside.len() as f64)
                };
                weights = Some(compute_blend_weights(
                    &mesh,
                    &global,
                    set.target_size.center(),
                    centroid,
                ));
                similarity = Some(candidate.transform);
            }
            Err(e) => notes.push(alloc::format!("similarity constraint skipped: {e}")),
        }
    }
    let adjusted = match (&similarity, &weights) {
        (Some(s), Some(w)) => {
            apply_similarity_constraint(&field, s, w).map_err(|e| e.in_stage("similarity"))?
        }
        _ => AdjustedWarpPair::unconstrained(&field),
    };
    let reference_field = ReferenceWarpField::new(
        &mesh,
        &field,
        &global,
        similarity.as_ref().zip(weights.as_ref()),
        set.reference_size,
        config.max_extension,
    )
    .map_err(|e| e.in_stage("similarity"))?;

    let prewarp =
        prewarp_vertices(&mesh, &adjusted.target_warps).map_err(|e| e.in_stage("prewarp"))?;

    let mut world_points = Vec::with_capacity(filtered.points.len());
    for m in &filtered.points {
        match reference_field.forward(m.p_prime) {
            Some(q) => world_points.push(PointMatch::new(m.p, q)),
            None => notes.push(String::from("a point match left the output frame")),
        }
    }
    let mut world_lines = Vec::with_capacity(filtered.lines.len());
    let mut line_frames = Vec::with_capacity(filtered.lines.len());
    for m in &filtered.lines {
        let mapped = reference_field
            .t_prime_at(m.l_prime.midpoint())
            .and_then(|t| {
                let (a, b) = (t.apply(m.l_prime.p0()).ok()?, t.apply(m.l_prime.p1()).ok()?);
                LineSegment::new(a, b).ok()
            });
        match mapped {
            Some(l) => {
                line_frames.push(frames_for(&mesh, &reference_field, m));
                world_lines.push(LineMatch::new(m.l, l));
            }
            None => notes.push(String::from("a line match left the output frame")),
        }
    }

    let (vertices, energies) = if config.refine {
        let (lines, collinear): (&[LineMatch], Vec<LineSegment>) = if config.use_lines {
            let outside = filtered
                .lines
                .iter()
                .filter(|m| {
                    global
                        .apply(m.l.midpoint())
                        .map_or(true, |q| !set.reference_size.contains(q))
                })
                .map(|m| m.l)
                .collect();
            (&world_lines, outside)
        } else {
            (&[], Vec::new())
        };
        let salience = target_gray.map(|g| quad_salience(g, &mesh));
        let input = OptimizerInput {
            mesh: &mesh,
            prewarp: &prewarp,
            points: &world_points,
            lines,
            line_frames: Some(&line_frames),
            collinear: &collinear,
            salience: salience.as_deref(),
            triangulation: config.triangulation,
        };
        let outcome = refine(&input, &config.weights, config.collinearity_iters.max(1))
            .map_err(|e| e.in_stage("refine"))?;
        (outcome.vertices, outcome.energies)
    } else {
        (prewarp.clone(), Vec::new())
    };

    Ok(Registration {
        mesh,
        filtered,
        point_inliers,
        line_inliers,
        global,
        field,
        similarity,
        weights,
        adjusted,
        reference_field,
        overlap_cells,
        prewarp,
        vertices,
        energies,
        world_points,
        world_lines,
        line_frames,
        notes,
    })
}

/// `l'` moved by `T'_i` for every cell `i` the target line `l` crosses.
fn frames_for(mesh: &GridMesh, field: &ReferenceWarpField, m: &LineMatch) -> LineFrames {
    let frames = cut_line_by_grid(&m.l, mesh, 0)
        .iter()
        .filter_map(|c| {
            let t = field.t_prime(c.anchor.col, c.anchor.row)?;
            let (a, b) = (t.apply(m.l_prime.p0()).ok()?, t.apply(m.l_prime.p1()).ok()?);
            Some((
                mesh.cell_index(c.anchor.col, c.anchor.row),
                *LineSegment::new(a, b).ok()?.line(),
            ))
        })
        .collect();
    LineFrames::new(frames)
}

/// Samples along the border of an image.
fn border(size: ImageSize, steps: usize) -> Vec<Point2> {
    let (w, h) = (size.width as f64, size.height as f64);
    let mut out = Vec::with_capacity(4 * steps);
    for k in 0..steps {
        let a = k as f64 / steps as f64;
        out.extend([
            Point2::new(a * w, 0.0),
            Point2::new(w, a * h),
            Point2::new((1.0 - a) * w, h),
            Point2::new(0.0, (1.0 - a) * h),
        ]);
    }
    out
}

/// Stitches `target` onto `reference`.
pub fn stitch_pair(
    target: &Image,
    reference: &Image,
    set: &CorrespondenceSet,
    config: &PipelineConfig,
) -> Result<StitchResult> {
    check_size(target, set.target_size, "target").map_err(|e| e.in_stage("input"))?;
    check_size(reference, set.reference_size, "reference").map_err(|e| e.in_stage("input"))?;
    let gray = target.to_gray();
    let registration = register(set, Some(&gray), config)?;

    let warp = registration.mesh_warp();
    let mut extent = warp.vertices.clone();
    extent.extend(
        border(set.reference_size, 64)
            .into_iter()
            .filter_map(|r| registration.reference_field.forward(r)),
    );
    let canvas = compute_canvas(&extent, config.canvas_cap).map_err(|e| e.in_stage("compose"))?;
    let warped_target =
        warp_target(target, &warp, &canvas, config.sampling).map_err(|e| e.in_stage("compose"))?;
    let warped_reference = warp_reference(
        reference,
        &registration.reference_field,
        &canvas,
        config.sampling,
    );
    let image = blend_average(&[&warped_target, &warped_reference]);

    let geometric = registration
        .geometric_error()
        .map_err(|e| e.in_stage("metrics"))?;
    let (cor, n_overlap) = overlap_correlation(&warped_target, &warped_reference)?;
    let report = MetricReport {
        cor,
        err_p: geometric.err_p,
        err_l: geometric.err_l,
        err_mg: geometric.err_mg,
        n_overlap,
        m_points: geometric.m_points,
        k_lines: geometric.k_lines,
    };
    Ok(StitchResult {
        image,
        canvas,
        report,
        scale_distortion: registration.scale_distortion(),
        registration,
        target: warped_target,
        reference: warped_reference,
    })
}

/// Cor over the common mask; NaN with a zero count when the rasters do not
/// overlap.
pub fn overlap_correlation(a: &WarpedRaster, b: &WarpedRaster) -> Result<(f64, usize)> {
    let mask: Mask = a.mask.and(&b.mask);
    match correlation_metric(&a.image.to_gray(), &b.image.to_gray(), &mask) {
        Ok(v) => Ok(v),
        Err(Error::EmptyOverlap) => Ok((f64::NAN, 0)),
        Err(e) => Err(e.in_stage("metrics")),
    }
}

/// Correspondences between two images of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorrespondences {
    pub target: usize,
    pub reference: usize,
    pub set: CorrespondenceSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub image: Image,
    pub canvas: Canvas,
    /// Every image's warp into the anchor frame.
    pub warps: Vec<MeshWarp>,
    /// Per input pair, in input order.
    pub pair_errors: Vec<GeometricError>,
}

/// Registers every image into the anchor's frame along a breadth-first
/// spanning tree of the pair graph, then renders all of them. Each image is
/// warped onto its tree parent with the similarity constraint disabled and
/// the result is chained through the parent's warp.
pub fn stitch_sequence(
    images: &[Image],
    pairs: &[PairCorrespondences],
    anchor: usize,
    config: &PipelineConfig,
) -> Result<SequenceResult> {
    let n = images.len();
    if anchor >= n {
        return Err(Error::InvalidInput(alloc::format!(
            "anchor {anchor} out of range for {n} images"
        )));
    }
    for p in pairs {
        if p.target >= n || p.reference >= n || p.target == p.reference {
            return Err(Error::InvalidInput(alloc::format!(
                "pair ({}, {}) is invalid",
                p.target,
                p.reference
            )));
        }
        check_size(&images[p.target], p.set.target_size, "target")
            .map_err(|e| e.in_stage("input"))?;
        check_size(&images[p.reference], p.set.reference_size, "reference")
            .map_err(|e| e.in_stage("input"))?;
    }
    let config = PipelineConfig {
        similarity: false,
        ..config.clone()
    };

    let mut warps: Vec<Option<MeshWarp>> = alloc::vec![None; n];
    let size = |i: usize| ImageSize::new(images[i].width as u32, images[i].height as u32);
    let anchor_mesh = GridMesh::new(size(anchor).width as f64, size(anchor).height as f64, 1, 1)?;
    warps[anchor] = Some(MeshWarp::identity(anchor_mesh));
    let mut queue = VecDeque::from([anchor]);
    while let Some(parent) = queue.pop_front() {
        for p in pairs {
            let (child, set) = if p.reference == parent {
                (p.target, p.set.clone())
            } else if p.target == parent {
                (p.reference, p.set.swapped())
            } else {
                continue;
            };
            if warps[child].is_some() {
                continue;
            }
            let gray = images[child].to_gray();
            let reg = register(&set, Some(&gray), &config)?;
            let parent_warp = warps[parent].as_ref().expect("parent registered");
            let vertices = reg
                .vertices
                .iter()
                .map(|&v| parent_warp.forward(v))
                .collect();
            warps[child] = Some(MeshWarp::new(reg.mesh, vertices)?);
            queue.push_back(child);
        }
    }
    let warps: Vec<MeshWarp> = warps
        .into_iter()
        .enumerate()
        .map(|(i, w)| w.ok_or(Error::DisconnectedChain(i)))
        .collect::<Result<_>>()?;

    let mut extent = Vec::new();
    for w in &warps {
        extent.extend_from_slice(&w.vertices);
    }
    let canvas = compute_canvas(&extent, config.canvas_cap).map_err(|e| e.in_stage("compose"))?;
    let rasters = images
        .iter()
        .zip(&warps)
        .map(|(img, w)| warp_target(img, w, &canvas, config.sampling))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("compose"))?;
    let image = blend_average(&rasters.iter().collect::<Vec<_>>());

    let mut pair_errors = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (wt, wr) = (&warps[p.target], &warps[p.reference]);
        let points: Vec<PointMatch> = p
            .set
            .points
            .iter()
            .map(|m| PointMatch::new(m.p, wr.forward(m.p_prime)))
            .collect();
        let lines: Vec<LineMatch> = p
            .set
            .lines
            .iter()
            .filter_map(|m| {
                let l = LineSegment::new(wr.forward(m.l_prime.p0()), wr.forward(m.l_prime.p1()))
                    .ok()?;
                Some(LineMatch::new(m.l, l))
            })
            .collect();
        pair_errors.push(
            mean_geometric_error(|q| Some(wt.forward(q)), &points, &lines)
                .map_err(|e| e.in_stage("metrics"))?,
        );
    }
    Ok(SequenceResult {
        image,
        canvas,
        warps,
        pair_errors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub scene: usize,
    pub config: usize,
    pub report: MetricReport,
    pub scale_distortion: f64,
}

/// Runs every configuration on every scene, scene-major.
pub fn evaluate(
    configs: &[PipelineConfig],
    scenes: &[(Image, Image, CorrespondenceSet)],
) -> Result<Vec<EvaluationRow>> {
    let mut rows = Vec::with_capacity(configs.len() * scenes.len());
    for (si, (target, reference, set)) in scenes.iter().enumerate() {
        for (ci, config) in configs.iter().enumerate() {
            let r = stitch_pair(target, reference, set, config)?;
            rows.push(EvaluationRow {
                scene: si,
                config: ci,
                report: r.report,
                scale_distortion: r.scale_distortion,
            });
        }
    }
    Ok(rows)
}
