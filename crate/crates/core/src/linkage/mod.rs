//! Linkage of grid counts to census zones: per-zone operator-user estimates,
//! the ratio index against filtered residents, and its distribution.

mod region;
mod zones;

pub use region::{
    LinkageContext, MarketShareEstimate, RegionRatio, RegionSelection, Snapshot, DEFAULT_SNAPSHOT_QUARTER,
    SLIVER_FRACTION,
};
pub use zones::{parse_zones, read_zones, write_zones_geojson, zones_feature_collection};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GridSpec, OverlapWeights, Polygon};
use crate::series::GridFrame;

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("unknown zone id {0:?}")]
    UnknownZone(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no defined ratios to summarize")]
    EmptySummary,
    #[error("every region ratio is undefined")]
    EstimationFailed,
    #[error("invalid zone file: {0}")]
    Format(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandUse {
    Residential,
    Commercial,
    Industrial,
    Other,
    #[default]
    Unknown,
}

impl LandUse {
    pub fn parse(s: &str) -> LandUse {
        match s.trim().to_ascii_lowercase().as_str() {
            "residential" => LandUse::Residential,
            "commercial" => LandUse::Commercial,
            "industrial" => LandUse::Industrial,
            "other" => LandUse::Other,
            _ => LandUse::Unknown,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LandUse::Residential => "residential",
            LandUse::Commercial => "commercial",
            LandUse::Industrial => "industrial",
            LandUse::Other => "other",
            LandUse::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusZone {
    pub zone_id: String,
    pub polygon: Polygon,
    pub residents_total: u64,
    pub residents_under11: u64,
    pub residents_over80: u64,
    pub land_use: LandUse,
}

impl CensusZone {
    pub fn new(
        zone_id: impl Into<String>,
        polygon: Polygon,
        residents_total: u64,
        residents_under11: u64,
        residents_over80: u64,
        land_use: LandUse,
    ) -> Result<Self, LinkageError> {
        let zone_id = zone_id.into();
        if residents_under11 + residents_over80 > residents_total {
            return Err(LinkageError::Argument(format!(
                "zone {zone_id}: {residents_under11} + {residents_over80} excluded residents exceed total {residents_total}"
            )));
        }
        Ok(Self { zone_id, polygon, residents_total, residents_under11, residents_over80, land_use })
    }

    /// Residents aged 11 to 80.
    pub fn residents_filtered(&self) -> u64 {
        self.residents_total - self.residents_under11 - self.residents_over80
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Weighted cell average scaled by zone area over cell area.
    #[default]
    AreaRatio,
    /// Each cell contributes its value times the share of the cell covered.
    CellFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub zone_id: String,
    pub tim_users: f64,
    pub residents_filtered: u64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub min: f64,
    pub p5: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
    pub n_zones: usize,
    pub n_undefined: usize,
}

fn check_inputs(zone: &CensusZone, frame: &GridFrame, w: &OverlapWeights, grid: &GridSpec) -> Result<(), LinkageError> {
    if !frame.matches(grid) {
        return Err(LinkageError::Consistency(format!(
            "frame is {:?}, grid is {}x{}",
            frame.values.dim(),
            grid.n_rows,
            grid.n_cols
        )));
    }
    if w.zone_id != zone.zone_id {
        return Err(LinkageError::Consistency(format!("weights belong to {}, not {}", w.zone_id, zone.zone_id)));
    }
    if w.max_cell().is_some_and(|c| c >= grid.n_cells()) {
        return Err(LinkageError::Consistency(format!("weights for {} reference cells outside the grid", w.zone_id)));
    }
    Ok(())
}

/// Estimated operator users living in `zone`: `(sum_k v_k w_k) * area(zone) / area(cell)`.
pub fn zone_tim_users(zone: &CensusZone, frame: &GridFrame, w: &OverlapWeights, grid: &GridSpec) -> Result<f64, LinkageError> {
    zone_tim_users_with(EstimatorMode::AreaRatio, zone, frame, w, grid)
}

pub fn zone_tim_users_with(
    mode: EstimatorMode,
    zone: &CensusZone,
    frame: &GridFrame,
    w: &OverlapWeights,
    grid: &GridSpec,
) -> Result<f64, LinkageError> {
    check_inputs(zone, frame, w, grid)?;
    let area = zone.polygon.area();
    let cell = grid.cell_area();
    Ok(match mode {
        EstimatorMode::AreaRatio => {
            let weighted: f64 = w.entries.iter().map(|&(k, wk)| frame.value(k) * wk).sum();
            weighted * area / cell
        }
        EstimatorMode::CellFraction => w.entries.iter().map(|&(k, wk)| frame.value(k) * (wk * area / cell)).sum(),
    })
}

pub fn ratio_index(zone: &CensusZone, tim_users: f64) -> RatioRecord {
    let residents_filtered = zone.residents_filtered();
    RatioRecord {
        zone_id: zone.zone_id.clone(),
        tim_users,
        residents_filtered,
        ratio: (residents_filtered > 0).then(|| tim_users / residents_filtered as f64),
    }
}

/// Linear interpolation at rank `(n - 1) p` of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Summary over the defined ratios. `None` when no ratio is defined.
pub fn summarize(records: &[RatioRecord]) -> Option<RatioSummary> {
    let mut r: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    if r.is_empty() {
        return None;
    }
    r.sort_by(f64::total_cmp);
    Some(RatioSummary {
        min: r[0],
        p5: percentile(&r, 0.05),
        p25: percentile(&r, 0.25),
        median: percentile(&r, 0.5),
        p75: percentile(&r, 0.75),
        p95: percentile(&r, 0.95),
        max: r[r.len() - 1],
        n_zones: records.len(),
        n_undefined: records.len() - r.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{PlanarPoint, Rect};

    fn square_zone(id: &str, r: Rect, total: u64, young: u64, old: u64) -> CensusZone {
        CensusZone::new(id, Polygon::from_rect(&r).unwrap(), total, young, old, LandUse::Residential).unwrap()
    }

    fn rec(ratio: f64) -> RatioRecord {
        RatioRecord { zone_id: String::new(), tim_users: ratio, residents_filtered: 1, ratio: Some(ratio) }
    }

    #[test]
    fn ratio_arithmetic() {
        let z = square_zone("a", Rect::new(0.0, 0.0, 1.0, 1.0), 120, 10, 10);
        let r = ratio_index(&z, 30.0);
        assert_eq!(r.residents_filtered, 100);
        assert!((r.ratio.unwrap() - 0.30).abs() < 1e-15);
        let empty = square_zone("b", Rect::new(0.0, 0.0, 1.0, 1.0), 5, 3, 2);
        assert_eq!(ratio_index(&empty, 4.0).ratio, None);
        let z = square_zone("c", Rect::new(0.0, 0.0, 1.0, 1.0), 50, 0, 0);
        assert_eq!(ratio_index(&z, 0.0).ratio, Some(0.0));
    }

    #[test]
    fn excluded_residents_cannot_exceed_total() {
        let p = Polygon::from_rect(&Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert!(CensusZone::new("x", p, 10, 6, 5, LandUse::Unknown).is_err());
    }

    #[test]
    fn percentiles_at_exact_ranks() {
        let recs: Vec<RatioRecord> = [0.5, 0.1, 0.4, 0.2, 0.3].into_iter().map(rec).collect();
        let s = summarize(&recs).unwrap();
        assert!((s.median - 0.3).abs() < 1e-15);
        assert!((s.p25 - 0.2).abs() < 1e-15);
        assert!((s.p75 - 0.4).abs() < 1e-15);
        assert_eq!((s.min, s.max), (0.1, 0.5));
        let one = summarize(&[rec(0.7)]).unwrap();
        assert!([one.min, one.p5, one.p25, one.median, one.p75, one.p95, one.max].iter().all(|v| *v == 0.7));
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn one_full_cell_gives_the_cell_value() {
        let grid = GridSpec::new(PlanarPoint::new(0.0, 0.0), 150.0, 2, 2).unwrap();
        let z = square_zone("z", grid.cell_rect(1, 0), 10, 0, 0);
        let w = crate::geo::overlap_weights("z", &z.polygon, &grid).unwrap();
        let mut values = ndarray::Array2::zeros((2, 2));
        values[[1, 0]] = 412.0;
        let frame = GridFrame { date: chrono::NaiveDate::from_ymd_opt(2015, 10, 28).unwrap(), quarter: 84, values };
        assert!((zone_tim_users(&z, &frame, &w, &grid).unwrap() - 412.0).abs() < 1e-9);
        let other = crate::geo::OverlapWeights::new("q", w.entries.clone()).unwrap();
        assert!(matches!(zone_tim_users(&z, &frame, &other, &grid), Err(LinkageError::Consistency(_))));
    }
}
