//! Run configuration, loaded from JSON with every field optional.

use std::path::{Path, PathBuf};

use cellshare_core::classify::ClassifyParams;
use cellshare_core::cluster::{BasisSpec, DEFAULT_MIN_SPLIT_SILHOUETTE};
use cellshare_core::geo::{CellRange, GeoPoint, GridSpec};
use cellshare_core::hog::HogParams;
use cellshare_core::linkage::{EstimatorMode, RegionSelection, DEFAULT_SNAPSHOT_QUARTER};
use cellshare_core::series::{StandardizeScope, QUARTERS_PER_DAY};
use cellshare_core::synth::SynthConfig;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Observed data on disk, as an alternative to the synthetic generator.
/// Relative paths resolve against the configuration file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub grid_csv: PathBuf,
    pub zones_geojson: PathBuf,
    pub grid: GridSpec,
    /// Geographic point mapped to the planar origin.
    pub geo_origin: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub scope: StandardizeScope,
    pub k_min: usize,
    pub k_max: usize,
    pub g_max: usize,
    pub basis: BasisSpec,
    pub min_split_silhouette: f64,
    /// Cells summed into daily profiles; whole grid when absent.
    pub ddp_region: Option<CellRange>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            scope: StandardizeScope::Global,
            k_min: 2,
            k_max: 6,
            g_max: 4,
            basis: BasisSpec::default(),
            min_split_silhouette: DEFAULT_MIN_SPLIT_SILHOUETTE,
            ddp_region: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxplotConfig {
    /// One boxplot per calendar month inside each group.
    pub by_month: bool,
    /// Emit SVG plots next to the JSON.
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageConfig {
    /// Day of the snapshot frame; the first loaded day when absent.
    pub snapshot_date: Option<NaiveDate>,
    pub snapshot_quarter: u8,
    /// Buffer applied to region selections that do not set one.
    pub default_buffer_m: f64,
    pub national_reference: f64,
    pub mode: EstimatorMode,
    /// Analyst regions for the market-share estimate.
    pub regions: Vec<RegionSelection>,
}

impl Default for LinkageConfig {
    fn default() -> Self {
        Self {
            snapshot_date: None,
            snapshot_quarter: DEFAULT_SNAPSHOT_QUARTER,
            default_buffer_m: 0.0,
            national_reference: 0.302,
            mode: EstimatorMode::AreaRatio,
            regions: Vec::new(),
        }
    }
}

impl LinkageConfig {
    pub fn with_default_buffer(&self, sel: &RegionSelection) -> RegionSelection {
        let mut s = sel.clone();
        if s.buffer_m.is_none() {
            s.buffer_m = Some(self.default_buffer_m);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the generator and every clustering stage.
    pub seed: u64,
    pub synth: Option<SynthConfig>,
    pub inputs: Option<InputPaths>,
    pub hog: HogParams,
    pub cluster: ClusterConfig,
    pub boxplot: BoxplotConfig,
    pub linkage: LinkageConfig,
    pub out: Option<PathBuf>,
    pub bind: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            synth: None,
            inputs: None,
            hog: HogParams::default(),
            cluster: ClusterConfig::default(),
            boxplot: BoxplotConfig::default(),
            linkage: LinkageConfig::default(),
            out: None,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

impl RunConfig {
    /// Defaults with the stock synthetic city, used when no file is given.
    pub fn synthetic() -> Self {
        Self { synth: Some(SynthConfig::default()), ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text)
    }

    /// Checks the configuration; `base` is where relative input paths live.
    pub fn validate(&self, base: &Path) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match (&self.synth, &self.inputs) {
            (Some(_), Some(_)) => return bad("configure either `synth` or `inputs`, not both".into()),
            (None, None) => return bad("one of `synth` or `inputs` is required".into()),
            (Some(s), None) => s.validate().map_err(|e| CliError::Config(e.to_string()))?,
            (None, Some(i)) => {
                i.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
                for p in [&i.grid_csv, &i.zones_geojson] {
                    let full = base.join(p);
                    if !full.is_file() {
                        return bad(format!("input file {} does not exist", full.display()));
                    }
                }
            }
        }
        self.hog.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let c = &self.cluster;
        if c.k_min < 2 || c.k_min > c.k_max {
            return bad(format!("k range {}..={} must start at 2 or more and be non-empty", c.k_min, c.k_max));
        }
        if c.g_max == 0 {
            return bad("g_max must be at least 1".into());
        }
        if usize::from(self.linkage.snapshot_quarter) >= QUARTERS_PER_DAY {
            return bad(format!("snapshot_quarter {} is not a quarter of the day", self.linkage.snapshot_quarter));
        }
        let l = &self.linkage;
        if !(l.default_buffer_m.is_finite() && l.default_buffer_m >= 0.0) {
            return bad(format!("default_buffer_m {} must be a non-negative distance", l.default_buffer_m));
        }
        if !(l.national_reference.is_finite() && l.national_reference >= 0.0) {
            return bad(format!("national_reference {} is not a share", l.national_reference));
        }
        for r in &l.regions {
            r.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn classify_params(&self) -> ClassifyParams {
        let c = &self.cluster;
        ClassifyParams {
            hog: self.hog,
            scope: c.scope,
            k_min: c.k_min,
            k_max: c.k_max,
            g_max: c.g_max,
            basis: c.basis,
            min_split_silhouette: c.min_split_silhouette,
            seed: self.seed,
            ddp_region: c.ddp_region,
        }
    }

    /// Synthetic configuration with the run seed applied.
    pub fn synth_config(&self) -> Option<SynthConfig> {
        self.synth.clone().map(|s| SynthConfig { seed: self.seed, ..s })
    }

    /// SHA-256 of the configuration, leaving out where results are written
    /// and served so that relocated runs hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.bind = String::new();
        let bytes = serde_json::to_vec(&c).expect("configuration serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
