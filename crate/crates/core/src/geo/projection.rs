use serde::{Deserialize, Serialize};

use super::GeoError;

/// Mean Earth radius used by the local projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// WGS84 longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
            return Err(GeoError::InvalidCoordinate(format!("longitude {lon} out of range")));
        }
        if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
            return Err(GeoError::InvalidCoordinate(format!("latitude {lat} out of range")));
        }
        Ok(Self { lon, lat })
    }
}

/// Metres east/north of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Local equirectangular projection around `origin`.
///
/// The x scale is fixed at the origin latitude, so distortion grows with the
/// north-south distance from the origin. At city scale it stays near 0.1%.
pub fn project(p: GeoPoint, origin: GeoPoint) -> PlanarPoint {
    let k = EARTH_RADIUS_M * origin.lat.to_radians().cos();
    PlanarPoint {
        x: k * (p.lon - origin.lon).to_radians(),
        y: EARTH_RADIUS_M * (p.lat - origin.lat).to_radians(),
    }
}

/// Inverse of [`project`] for the same origin.
pub fn unproject(p: PlanarPoint, origin: GeoPoint) -> GeoPoint {
    let k = EARTH_RADIUS_M * origin.lat.to_radians().cos();
    GeoPoint {
        lon: origin.lon + (p.x / k).to_degrees(),
        lat: origin.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
    }
}
