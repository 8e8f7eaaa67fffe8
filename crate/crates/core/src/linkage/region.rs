use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{percentile, ratio_index, summarize, zone_tim_users_with, CensusZone, EstimatorMode, LinkageError, RatioRecord, RatioSummary};
use crate::geo::{clip_to_rect, overlap_weights, GridSpec, OverlapWeights};
use crate::series::GridFrame;

/// Relative overlap below which a buffered box only touches a zone; absorbs
/// rounding when a buffer ends exactly on a zone edge.
pub const SLIVER_FRACTION: f64 = 1e-9;

/// 21:00, when residential zones hold mostly their residents.
pub const DEFAULT_SNAPSHOT_QUARTER: u8 = 84;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub date: NaiveDate,
    pub quarter: u8,
}

/// Analyst-selected zones, optionally grown by the zones around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSelection {
    #[serde(default)]
    pub name: Option<String>,
    pub zone_ids: Vec<String>,
    /// Radius of the surrounding band, in metres.
    #[serde(default)]
    pub buffer_m: Option<f64>,
    #[serde(default)]
    pub snapshot: Option<Snapshot>,
}

impl RegionSelection {
    pub fn new(zone_ids: impl IntoIterator<Item = impl Into<String>>, buffer_m: Option<f64>) -> Self {
        Self { name: None, zone_ids: zone_ids.into_iter().map(Into::into).collect(), buffer_m, snapshot: None }
    }

    pub fn validate(&self) -> Result<(), LinkageError> {
        if self.zone_ids.is_empty() {
            return Err(LinkageError::Argument("region selects no zones".into()));
        }
        if let Some(b) = self.buffer_m {
            if !(b.is_finite() && b >= 0.0) {
                return Err(LinkageError::Argument(format!("buffer_m {b} must be a non-negative distance")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRatio {
    pub name: Option<String>,
    /// Zones actually aggregated, selection plus buffer, in zone order.
    pub members: Vec<String>,
    pub record: RatioRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShareEstimate {
    pub regions: Vec<RegionRatio>,
    /// Median of the defined region ratios.
    pub estimate: f64,
    pub p25: f64,
    pub p75: f64,
    pub iqr: f64,
    pub n_undefined: usize,
    pub national_reference: f64,
}

/// Zones, grid and their overlap weights, computed once and shared.
#[derive(Debug, Clone)]
pub struct LinkageContext {
    grid: GridSpec,
    zones: Vec<CensusZone>,
    weights: Vec<OverlapWeights>,
    index: HashMap<String, usize>,
    mode: EstimatorMode,
}

impl LinkageContext {
    pub fn new(grid: GridSpec, zones: Vec<CensusZone>) -> Result<Self, LinkageError> {
        grid.validate()?;
        let mut index = HashMap::with_capacity(zones.len());
        for (i, z) in zones.iter().enumerate() {
            if index.insert(z.zone_id.clone(), i).is_some() {
                return Err(LinkageError::Argument(format!("duplicate zone id {}", z.zone_id)));
            }
        }
        let weights = zones
            .par_iter()
            .map(|z| overlap_weights(z.zone_id.clone(), &z.polygon, &grid))
            .collect::<Result<Vec<_>, _>>()?;
        for w in &weights {
            if w.covered_fraction < 1.0 - 1e-9 {
                log::warn!("zone {} is only {:.4} inside the grid", w.zone_id, w.covered_fraction);
            }
        }
        Ok(Self { grid, zones, weights, index, mode: EstimatorMode::AreaRatio })
    }

    pub fn with_mode(mut self, mode: EstimatorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn zones(&self) -> &[CensusZone] {
        &self.zones
    }

    pub fn weights(&self) -> &[OverlapWeights] {
        &self.weights
    }

    pub fn zone(&self, id: &str) -> Result<&CensusZone, LinkageError> {
        self.index.get(id).map(|&i| &self.zones[i]).ok_or_else(|| LinkageError::UnknownZone(id.to_string()))
    }

    /// Per-zone operator-user estimates, in zone order.
    pub fn tim_users(&self, frame: &GridFrame) -> Result<Vec<f64>, LinkageError> {
        self.zones
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(z, w)| zone_tim_users_with(self.mode, z, frame, w, &self.grid))
            .collect()
    }

    pub fn ratio_records(&self, frame: &GridFrame) -> Result<Vec<RatioRecord>, LinkageError> {
        let users = self.tim_users(frame)?;
        Ok(self.zones.iter().zip(users).map(|(z, u)| ratio_index(z, u)).collect())
    }

    pub fn ratio_table(&self, frame: &GridFrame) -> Result<(Vec<RatioRecord>, Option<RatioSummary>), LinkageError> {
        let records = self.ratio_records(frame)?;
        let summary = summarize(&records);
        Ok((records, summary))
    }

    /// Indices of the zones making up a region. A positive buffer adds every
    /// zone overlapping the selection's bounding box grown by `buffer_m`.
    /// Overlaps below [`SLIVER_FRACTION`] of the zone's area count as touching.
    pub fn region_members(&self, sel: &RegionSelection) -> Result<Vec<usize>, LinkageError> {
        sel.validate()?;
        let mut members = BTreeSet::new();
        for id in &sel.zone_ids {
            members.insert(*self.index.get(id).ok_or_else(|| LinkageError::UnknownZone(id.clone()))?);
        }
        if let Some(buffer) = sel.buffer_m.filter(|b| *b > 0.0) {
            let bbox = members
                .iter()
                .map(|&i| self.zones[i].polygon.bbox())
                .reduce(|a, b| a.union(&b))
                .expect("selection is non-empty")
                .expand(buffer);
            for (i, z) in self.zones.iter().enumerate() {
                if members.contains(&i) || !z.polygon.bbox().overlaps(&bbox) {
                    continue;
                }
                let overlap = clip_to_rect(&z.polygon, &bbox).map_or(0.0, |p| p.area());
                if overlap > SLIVER_FRACTION * z.polygon.area() {
                    members.insert(i);
                }
            }
        }
        Ok(members.into_iter().collect())
    }

    /// Combined record for a region, from per-zone records in zone order.
    pub fn aggregate_records(&self, sel: &RegionSelection, records: &[RatioRecord]) -> Result<RegionRatio, LinkageError> {
        if records.len() != self.zones.len() {
            return Err(LinkageError::Consistency(format!("{} records for {} zones", records.len(), self.zones.len())));
        }
        let members = self.region_members(sel)?;
        let tim_users: f64 = members.iter().map(|&i| records[i].tim_users).sum();
        let residents_filtered: u64 = members.iter().map(|&i| records[i].residents_filtered).sum();
        let ids: Vec<String> = members.iter().map(|&i| self.zones[i].zone_id.clone()).collect();
        let record = RatioRecord {
            zone_id: ids.join("+"),
            tim_users,
            residents_filtered,
            ratio: (residents_filtered > 0).then(|| tim_users / residents_filtered as f64),
        };
        Ok(RegionRatio { name: sel.name.clone(), members: ids, record })
    }

    pub fn aggregate_region(&self, sel: &RegionSelection, frame: &GridFrame) -> Result<RegionRatio, LinkageError> {
        self.aggregate_records(sel, &self.ratio_records(frame)?)
    }

    pub fn market_share_from_records(
        &self,
        regions: &[RegionSelection],
        records: &[RatioRecord],
        national_reference: f64,
    ) -> Result<MarketShareEstimate, LinkageError> {
        if regions.is_empty() {
            return Err(LinkageError::Argument("no regions to estimate from".into()));
        }
        let regions = regions.iter().map(|s| self.aggregate_records(s, records)).collect::<Result<Vec<_>, _>>()?;
        let mut ratios: Vec<f64> = regions.iter().filter_map(|r| r.record.ratio).collect();
        if ratios.is_empty() {
            return Err(LinkageError::EstimationFailed);
        }
        ratios.sort_by(f64::total_cmp);
        let (p25, p75) = (percentile(&ratios, 0.25), percentile(&ratios, 0.75));
        Ok(MarketShareEstimate {
            n_undefined: regions.len() - ratios.len(),
            regions,
            estimate: percentile(&ratios, 0.5),
            p25,
            p75,
            iqr: p75 - p25,
            national_reference,
        })
    }

    pub fn estimate_market_share(
        &self,
        regions: &[RegionSelection],
        frame: &GridFrame,
        national_reference: f64,
    ) -> Result<MarketShareEstimate, LinkageError> {
        self.market_share_from_records(regions, &self.ratio_records(frame)?, national_reference)
    }
}
