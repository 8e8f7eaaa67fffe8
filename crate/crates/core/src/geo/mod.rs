//! Planar geometry kernel: projection, polygon areas, rectangle clipping and
//! grid/zone overlap weights.

mod clip;
mod grid;
mod polygon;
mod projection;
mod weights;

pub use clip::{clip_ring_to_rect, clip_to_rect};
pub use grid::{CellRange, GridSpec, Rect};
pub use polygon::{point_in_polygon, ring_signed_area, Polygon};
pub use projection::{project, unproject, GeoPoint, PlanarPoint, EARTH_RADIUS_M};
pub use weights::{overlap_weights, OverlapWeights, WEIGHT_FLOOR};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}
