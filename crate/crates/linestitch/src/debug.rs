//! Intermediate artifacts written by `stitch --debug DIR`.

use std::fs;
use std::path::Path;

use linestitch_core::pipeline::StitchResult;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::{matrix_rows, save_json};
use crate::imageio::{layer_rgba, save_image};

#[derive(Serialize)]
struct Homographies {
    cols: usize,
    rows: usize,
    global: [[f64; 3]; 3],
    /// Stage-one `H_i`, row-major cells.
    local: Vec<[[f64; 3]; 3]>,
    /// `H'_i` after the similarity constraint.
    target: Vec<[[f64; 3]; 3]>,
    /// `T'_i`.
    reference: Vec<[[f64; 3]; 3]>,
}

#[derive(Serialize)]
struct Weights {
    cols: usize,
    rows: usize,
    axis: [f64; 2],
    tau: Vec<f64>,
    xi: Vec<f64>,
}

#[derive(Serialize)]
struct Similarity {
    scale: f64,
    theta: f64,
    tx: f64,
    ty: f64,
}

#[derive(Serialize)]
struct Summary {
    canvas: [usize; 2],
    canvas_offset: [f64; 2],
    point_inliers: usize,
    line_inliers: usize,
    similarity: Option<Similarity>,
    overlap_cells: usize,
    scale_distortion: f64,
    energies: Vec<f64>,
    folded_target_cells: usize,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct Vertices {
    cols: usize,
    rows: usize,
    prewarp: Vec<[f64; 2]>,
    refined: Vec<[f64; 2]>,
}

pub fn write_debug(dir: &Path, result: &StitchResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let reg = &result.registration;
    let rows = |hs: &[linestitch_core::geometry::Homography]| {
        hs.iter().map(matrix_rows).collect::<Vec<_>>()
    };
    save_json(
        &dir.join("homographies.json"),
        &Homographies {
            cols: reg.mesh.cols,
            rows: reg.mesh.rows,
            global: matrix_rows(&reg.global),
            local: rows(&reg.field.per_cell),
            target: rows(&reg.adjusted.target_warps),
            reference: rows(&reg.adjusted.reference_warps),
        },
    )?;
    if let Some(w) = &reg.weights {
        save_json(
            &dir.join("blend_weights.json"),
            &Weights {
                cols: w.cols,
                rows: w.rows,
                axis: [w.axis.x, w.axis.y],
                tau: w.tau.clone(),
                xi: w.xi.clone(),
            },
        )?;
    }
    let xy =
        |v: &[linestitch_core::geometry::Point2]| v.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
    save_json(
        &dir.join("vertices.json"),
        &Vertices {
            cols: reg.mesh.cols,
            rows: reg.mesh.rows,
            prewarp: xy(&reg.prewarp),
            refined: xy(&reg.vertices),
        },
    )?;
    save_json(
        &dir.join("summary.json"),
        &Summary {
            canvas: [result.canvas.width, result.canvas.height],
            canvas_offset: [result.canvas.offset.x, result.canvas.offset.y],
            point_inliers: reg.point_inliers.len(),
            line_inliers: reg.line_inliers.len(),
            similarity: reg.similarity.map(|s| Similarity {
                scale: s.scale,
                theta: s.theta,
                tx: s.tx,
                ty: s.ty,
            }),
            overlap_cells: reg.overlap_cells.iter().filter(|&&o| o).count(),
            scale_distortion: result.scale_distortion,
            energies: reg.energies.clone(),
            folded_target_cells: result.target.folded,
            notes: reg.notes.clone(),
        },
    )?;
    save_image(&dir.join("warped_target.png"), &layer_rgba(&result.target))?;
    save_image(
        &dir.join("warped_reference.png"),
        &layer_rgba(&result.reference),
    )
}
