use serde::{Deserialize, Serialize};

use super::clip::{clip_ring_edge, Edge};
use super::polygon::ring_signed_area;
use super::{GeoError, GridSpec, PlanarPoint, Polygon};

/// Entries below this fraction of the zone area are treated as clipping slivers.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Fraction of a zone's area falling in each grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapWeights {
    pub zone_id: String,
    /// `(cell_index, fraction of zone area)` in row-major cell order.
    pub entries: Vec<(usize, f64)>,
    pub covered_fraction: f64,
}

impl OverlapWeights {
    /// Builds weights from explicit entries, checking each lies in (0, 1] and
    /// that they sum to at most one.
    pub fn new(zone_id: impl Into<String>, entries: Vec<(usize, f64)>) -> Result<Self, GeoError> {
        for &(cell, w) in &entries {
            if !(w > 0.0 && w <= 1.0) {
                return Err(GeoError::InvalidWeights(format!("cell {cell} has weight {w} outside (0, 1]")));
            }
        }
        let covered_fraction: f64 = entries.iter().map(|e| e.1).sum();
        if covered_fraction > 1.0 + 1e-9 {
            return Err(GeoError::InvalidWeights(format!(
                "weights sum to {covered_fraction}, more than the whole zone"
            )));
        }
        Ok(Self { zone_id: zone_id.into(), entries, covered_fraction })
    }

    pub fn max_cell(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.0).max()
    }
}

/// Area of the part of `rings` (exterior first) lying in one band-clipped
/// cell, given rings already clipped to the cell's row band.
fn rings_area(rings: &[Vec<PlanarPoint>]) -> f64 {
    let mut it = rings.iter();
    let ext = match it.next() {
        Some(r) => ring_signed_area(r).abs(),
        None => return 0.0,
    };
    ext - it.map(|h| ring_signed_area(h).abs()).sum::<f64>()
}

/// Overlap weights between `zone` and every cell of `grid`.
///
/// The zone is first clipped to each row band of the candidate cell range and
/// the band pieces are then clipped per column, so each ring is walked once
/// per row rather than once per cell. Geometry is shifted into the grid's
/// local frame before clipping.
pub fn overlap_weights(zone_id: impl Into<String>, zone: &Polygon, grid: &GridSpec) -> Result<OverlapWeights, GeoError> {
    grid.validate()?;
    let zone_id = zone_id.into();
    let local = zone.translate(-grid.origin.x, -grid.origin.y);
    let total = local.area();
    if !(total > 0.0) {
        return Err(GeoError::Degenerate(format!("zone {zone_id} has no area")));
    }
    let local_grid = GridSpec { origin: PlanarPoint::default(), ..*grid };
    let Some(range) = local_grid.candidate_range(&local.bbox()) else {
        return Ok(OverlapWeights { zone_id, entries: vec![], covered_fraction: 0.0 });
    };

    let s = grid.cell_size;
    let rings: Vec<&[PlanarPoint]> = local.rings().collect();
    let mut entries = Vec::new();
    let mut tmp = Vec::new();
    for row in range.row_start..range.row_end {
        let (y0, y1) = (row as f64 * s, (row + 1) as f64 * s);
        let band: Vec<Vec<PlanarPoint>> = rings
            .iter()
            .map(|r| {
                let mut lo = Vec::new();
                clip_ring_edge(r, Edge::Bottom(y0), &mut lo);
                let mut hi = Vec::new();
                clip_ring_edge(&lo, Edge::Top(y1), &mut hi);
                hi
            })
            .collect();
        if band[0].len() < 3 {
            continue;
        }
        for col in range.col_start..range.col_end {
            let (x0, x1) = (col as f64 * s, (col + 1) as f64 * s);
            let cell: Vec<Vec<PlanarPoint>> = band
                .iter()
                .map(|r| {
                    clip_ring_edge(r, Edge::Left(x0), &mut tmp);
                    let mut out = Vec::new();
                    clip_ring_edge(&tmp, Edge::Right(x1), &mut out);
                    out
                })
                .collect();
            let w = (rings_area(&cell) / total).min(1.0);
            if w >= WEIGHT_FLOOR {
                entries.push((grid.cell_index(row, col), w));
            }
        }
    }
    let covered_fraction = entries.iter().map(|e| e.1).sum();
    Ok(OverlapWeights { zone_id, entries, covered_fraction })
}
