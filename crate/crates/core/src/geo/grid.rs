use serde::{Deserialize, Serialize};

use super::{GeoError, PlanarPoint};

/// Axis-aligned rectangle in planar metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn expand(&self, d: f64) -> Rect {
        Rect::new(self.min_x - d, self.min_y - d, self.max_x + d, self.max_y + d)
    }

    pub fn union(&self, o: &Rect) -> Rect {
        Rect::new(
            self.min_x.min(o.min_x),
            self.min_y.min(o.min_y),
            self.max_x.max(o.max_x),
            self.max_y.max(o.max_y),
        )
    }

    /// True when the interiors overlap.
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.min_x < o.max_x && o.min_x < self.max_x && self.min_y < o.max_y && o.min_y < self.max_y
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

/// Regular lattice of square cells. Cell `(row, col)` spans
/// `[x0 + col*s, x0 + (col+1)*s] x [y0 + row*s, y0 + (row+1)*s]`, so rows grow
/// northwards from the lower-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: PlanarPoint,
    pub cell_size: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridSpec {
    pub fn new(origin: PlanarPoint, cell_size: f64, n_rows: usize, n_cols: usize) -> Result<Self, GeoError> {
        let g = Self { origin, cell_size, n_rows, n_cols };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(GeoError::InvalidGrid(format!("cell size {} must be positive", self.cell_size)));
        }
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(GeoError::InvalidGrid(format!(
                "grid must have at least one cell, got {}x{}",
                self.n_rows, self.n_cols
            )));
        }
        if !self.origin.is_finite() {
            return Err(GeoError::InvalidGrid("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    pub fn cell_row_col(&self, index: usize) -> (usize, usize) {
        (index / self.n_cols, index % self.n_cols)
    }

    pub fn cell_rect(&self, row: usize, col: usize) -> Rect {
        let s = self.cell_size;
        Rect::new(
            self.origin.x + col as f64 * s,
            self.origin.y + row as f64 * s,
            self.origin.x + (col + 1) as f64 * s,
            self.origin.y + (row + 1) as f64 * s,
        )
    }

    pub fn cell_center(&self, row: usize, col: usize) -> PlanarPoint {
        let s = self.cell_size;
        PlanarPoint::new(
            self.origin.x + (col as f64 + 0.5) * s,
            self.origin.y + (row as f64 + 0.5) * s,
        )
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.n_cols as f64 * self.cell_size,
            self.origin.y + self.n_rows as f64 * self.cell_size,
        )
    }

    /// Cell containing `p`; points on the upper/right extent edge map to the
    /// last row/column.
    pub fn cell_of(&self, p: PlanarPoint) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.n_cols as f64 && fy <= self.n_rows as f64) {
            return None;
        }
        let col = (fx.floor() as usize).min(self.n_cols - 1);
        let row = (fy.floor() as usize).min(self.n_rows - 1);
        Some((row, col))
    }

    /// Index range of cells whose rectangles overlap `r`, clamped to the grid.
    pub fn candidate_range(&self, r: &Rect) -> Option<CellRange> {
        let s = self.cell_size;
        let c0 = ((r.min_x - self.origin.x) / s).floor().max(0.0);
        let c1 = ((r.max_x - self.origin.x) / s).ceil().min(self.n_cols as f64);
        let r0 = ((r.min_y - self.origin.y) / s).floor().max(0.0);
        let r1 = ((r.max_y - self.origin.y) / s).ceil().min(self.n_rows as f64);
        if !(c0 < c1 && r0 < r1) {
            return None;
        }
        Some(CellRange {
            row_start: r0 as usize,
            row_end: r1 as usize,
            col_start: c0 as usize,
            col_end: c1 as usize,
        })
    }

    pub fn whole(&self) -> CellRange {
        CellRange { row_start: 0, row_end: self.n_rows, col_start: 0, col_end: self.n_cols }
    }
}

/// Half-open rectangular block of cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRange {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl CellRange {
    pub fn is_within(&self, grid: &GridSpec) -> bool {
        self.row_start < self.row_end
            && self.col_start < self.col_end
            && self.row_end <= grid.n_rows
            && self.col_end <= grid.n_cols
    }

    pub fn len(&self) -> usize {
        self.row_end.saturating_sub(self.row_start) * self.col_end.saturating_sub(self.col_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row_start..self.row_end).flat_map(move |r| (self.col_start..self.col_end).map(move |c| (r, c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(PlanarPoint::default(), 0.0, 3, 3).is_err());
        assert!(GridSpec::new(PlanarPoint::default(), 10.0, 0, 3).is_err());
        assert!(GridSpec::new(PlanarPoint::default(), -1.0, 3, 3).is_err());
    }

    #[test]
    fn cell_geometry() {
        let g = GridSpec::new(PlanarPoint::new(100.0, 200.0), 150.0, 4, 5).unwrap();
        assert_eq!(g.cell_rect(1, 2), Rect::new(400.0, 350.0, 550.0, 500.0));
        assert_eq!(g.cell_index(1, 2), 7);
        assert_eq!(g.cell_row_col(7), (1, 2));
        assert_eq!(g.cell_of(PlanarPoint::new(401.0, 351.0)), Some((1, 2)));
        assert_eq!(g.cell_of(PlanarPoint::new(850.0, 800.0)), Some((3, 4)));
        assert_eq!(g.cell_of(PlanarPoint::new(99.0, 300.0)), None);
    }

    #[test]
    fn candidate_range_clamps() {
        let g = GridSpec::new(PlanarPoint::default(), 10.0, 4, 4).unwrap();
        let r = g.candidate_range(&Rect::new(-5.0, 15.0, 12.0, 100.0)).unwrap();
        assert_eq!(r, CellRange { row_start: 1, row_end: 4, col_start: 0, col_end: 2 });
        assert!(g.candidate_range(&Rect::new(50.0, 50.0, 60.0, 60.0)).is_none());
    }
}
