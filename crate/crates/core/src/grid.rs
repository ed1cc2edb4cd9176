use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::correspondence::ImageSize;
use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Regular axis-aligned vertex lattice covering `[0, width] x [0, height]`.
///
/// Vertices are stored row-major, `(cols + 1) * (rows + 1)` of them; cells are
/// row-major too, `cols * rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMesh {
    pub cols: usize,
    pub rows: usize,
    pub cell_w: f64,
    pub cell_h: f64,
    pub vertices: Vec<Point2>,
    pub cell_centers: Vec<Point2>,
}

/// Location of a point inside a cell: cell indices plus normalized offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCoords {
    pub col: usize,
    pub row: usize,
    pub s: f64,
    pub t: f64,
}

impl GridMesh {
    pub fn new(width: f64, height: f64, cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 || !(width > 0.0) || !(height > 0.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "mesh needs positive extent and cell counts (got {width}x{height}, {cols}x{rows})"
            )));
        }
        let (cell_w, cell_h) = (width / cols as f64, height / rows as f64);
        let mut vertices = Vec::with_capacity((cols + 1) * (rows + 1));
        for r in 0..=rows {
            for c in 0..=cols {
                vertices.push(Point2::new(c as f64 * cell_w, r as f64 * cell_h));
            }
        }
        let mut cell_centers = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                cell_centers.push(Point2::new(
                    (c as f64 + 0.5) * cell_w,
                    (r as f64 + 0.5) * cell_h,
                ));
            }
        }
        Ok(Self {
            cols,
            rows,
            cell_w,
            cell_h,
            vertices,
            cell_centers,
        })
    }

    /// The shorter image side gets `shorter_cells` cells, the longer side a
    /// proportional count.
    pub fn with_density(size: ImageSize, shorter_cells: usize) -> Result<Self> {
        let (w, h) = (size.width as f64, size.height as f64);
        let n = shorter_cells.max(1) as f64;
        let (cols, rows) = if w <= h {
            (n, (n * h / w).round().max(1.0))
        } else {
            ((n * w / h).round().max(1.0), n)
        };
        Self::new(w, h, cols as usize, rows as usize)
    }

    pub fn width(&self) -> f64 {
        self.cell_w * self.cols as f64
    }

    pub fn height(&self) -> f64 {
        self.cell_h * self.rows as f64
    }

    pub fn vertex_count(&self) -> usize {
        (self.cols + 1) * (self.rows + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn vertex_index(&self, col: usize, row: usize) -> usize {
        row * (self.cols + 1) + col
    }

    pub fn cell_index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    /// Vertex indices of a cell: top-left, top-right, bottom-left, bottom-right.
    pub fn cell_vertices(&self, col: usize, row: usize) -> [usize; 4] {
        let tl = self.vertex_index(col, row);
        [tl, tl + 1, tl + self.cols + 1, tl + self.cols + 2]
    }

    pub fn contains(&self, p: Point2) -> bool {
        let eps = 1e-9 * (self.width() + self.height());
        p.x >= -eps && p.y >= -eps && p.x <= self.width() + eps && p.y <= self.height() + eps
    }

    /// Cell and in-cell offsets of `p`; points on the far boundary belong to
    /// the last cell.
    pub fn locate(&self, p: Point2) -> Option<CellCoords> {
        if !p.is_finite() || !self.contains(p) {
            return None;
        }
        let fx = (p.x / self.cell_w).max(0.0);
        let fy = (p.y / self.cell_h).max(0.0);
        let col = (fx.floor() as usize).min(self.cols - 1);
        let row = (fy.floor() as usize).min(self.rows - 1);
        Some(CellCoords {
            col,
            row,
            s: (fx - col as f64).clamp(0.0, 1.0),
            t: (fy - row as f64).clamp(0.0, 1.0),
        })
    }

    /// Cell containing `p` after clamping it into the mesh extent.
    pub fn nearest_cell(&self, p: Point2) -> (usize, usize) {
        let col = ((p.x / self.cell_w).floor().max(0.0) as usize).min(self.cols - 1);
        let row = ((p.y / self.cell_h).floor().max(0.0) as usize).min(self.rows - 1);
        (col, row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_covers_image() {
        let m = GridMesh::new(800.0, 600.0, 4, 3).unwrap();
        assert_eq!(m.vertices.len(), 20);
        assert_eq!(m.cell_centers.len(), 12);
        assert_eq!(m.vertices[19], Point2::new(800.0, 600.0));
        assert_eq!(m.cell_centers[0], Point2::new(100.0, 100.0));
        assert_eq!(m.cell_vertices(1, 1), [6, 7, 11, 12]);
    }

    #[test]
    fn density_follows_shorter_side() {
        let m = GridMesh::with_density(ImageSize::new(800, 600), 40).unwrap();
        assert_eq!((m.cols, m.rows), (53, 40));
        let m = GridMesh::with_density(ImageSize::new(300, 900), 10).unwrap();
        assert_eq!((m.cols, m.rows), (10, 30));
    }

    #[test]
    fn locate_boundaries() {
        let m = GridMesh::new(4.0, 2.0, 4, 2).unwrap();
        let c = m.locate(Point2::new(4.0, 2.0)).unwrap();
        assert_eq!((c.col, c.row, c.s, c.t), (3, 1, 1.0, 1.0));
        let c = m.locate(Point2::new(1.25, 0.5)).unwrap();
        assert_eq!((c.col, c.row), (1, 0));
        assert!((c.s - 0.25).abs() < 1e-12 && (c.t - 0.5).abs() < 1e-12);
        assert!(m.locate(Point2::new(-0.1, 0.5)).is_none());
        assert!(GridMesh::new(4.0, 2.0, 0, 2).is_err());
    }
}
