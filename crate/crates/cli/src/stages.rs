//! Pipeline stages. Each reads its predecessors' files from the run
//! directory, writes its own, and records a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cellshare_core::classify::cluster_days;
use cellshare_core::cluster::{BasisSpec, KScore};
use cellshare_core::fboxplot::{group_boxplots, BoxplotOutcome, GroupPanel};
use cellshare_core::geo::{CellRange, GeoPoint, GridSpec};
use cellshare_core::hog::{daily_features, FeatureLayout, HogParams};
use cellshare_core::linkage::{
    read_zones, write_zones_geojson, zones_feature_collection, LinkageContext, MarketShareEstimate, RatioRecord,
    RatioSummary, RegionSelection, Snapshot,
};
use cellshare_core::series::{
    compute_ddp, load_frame, load_series, standardize, DdpCurve, StandardizeScope, QUARTERS_PER_DAY,
};
use cellshare_core::synth::{synth_generate, GroundTruth};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::{LinkageConfig, RunConfig};
use crate::error::CliError;
use crate::plot::boxplot_svg;

pub const STAGES: [&str; 6] = ["synth", "ingest", "features", "cluster", "fboxplot", "linkage"];

/// A configured run rooted at an output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: RunConfig,
    /// Directory that relative input paths are resolved against.
    pub base: PathBuf,
    pub out: PathBuf,
    config_hash: String,
}

/// Where the grid series and zones come from, and how to read them.
#[derive(Debug, Clone)]
pub struct Source {
    pub series: Artifact,
    pub zones: Artifact,
    pub grid: GridSpec,
    pub geo_origin: GeoPoint,
    /// Files consulted to resolve the source, for manifests.
    pub extra: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub grid: GridSpec,
    pub geo_origin: GeoPoint,
    pub series: String,
    pub zones: String,
    pub n_days: usize,
    pub dates: Vec<NaiveDate>,
    pub dropped_days: Vec<NaiveDate>,
    pub n_zones: usize,
    /// Zones not fully inside the grid; their estimates miss the outside part.
    pub partially_covered: Vec<String>,
    pub ddp_region: CellRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayoutReport {
    pub frame: FeatureLayout,
    pub frame_features: usize,
    pub quarters: usize,
    pub day_features: usize,
    pub n_days: usize,
    pub hog: HogParams,
    pub scope: StandardizeScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub parent: usize,
    pub g: usize,
    pub n_days: usize,
    pub scores: Vec<KScore>,
    pub basis: BasisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub seed: u64,
    pub n_days: usize,
    pub feature_len: usize,
    pub k: usize,
    pub degenerate: bool,
    pub k_scores: Vec<KScore>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inertia_history: Vec<f64>,
    pub subgroups: Vec<SubgroupReport>,
    pub groups: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFile {
    pub group: String,
    pub curves: Vec<DdpCurve>,
    pub panels: Vec<GroupPanel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelIndex {
    pub label: String,
    pub boxplot: bool,
    pub median_id: Option<String>,
    pub outlier_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupIndex {
    pub group: String,
    pub n_days: usize,
    pub file: String,
    pub panels: Vec<PanelIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub snapshot: Snapshot,
    pub n_zones: usize,
    pub summary: Option<RatioSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShareReport {
    pub national_reference: f64,
    pub regions: Vec<RegionSelection>,
    pub estimate: Option<MarketShareEstimate>,
    /// Why no estimate is available, when it is not.
    pub failure: Option<String>,
}

/// Market share of `regions` over persisted records. Missing or undefined
/// estimates are reported, not raised, so an empty region list is valid.
pub fn market_share_report(
    ctx: &LinkageContext,
    linkage: &LinkageConfig,
    regions: &[RegionSelection],
    records: &[RatioRecord],
) -> Result<MarketShareReport, CliError> {
    let regions: Vec<RegionSelection> = regions.iter().map(|r| linkage.with_default_buffer(r)).collect();
    let (estimate, failure) = if regions.is_empty() {
        (None, Some("no regions selected".to_string()))
    } else {
        match ctx.market_share_from_records(&regions, records, linkage.national_reference) {
            Ok(m) => (Some(m), None),
            Err(cellshare_core::linkage::LinkageError::EstimationFailed) => {
                (None, Some("every selected region has an undefined ratio".to_string()))
            }
            Err(e) => return Err(e.into()),
        }
    };
    Ok(MarketShareReport { national_reference: linkage.national_reference, regions, estimate, failure })
}

fn label_of(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

impl Run {
    pub fn new(cfg: RunConfig, base: PathBuf, out: PathBuf) -> Result<Self, CliError> {
        cfg.validate(&base)?;
        let config_hash = cfg.hash();
        Ok(Self { cfg, base, out, config_hash })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn artifact(&self, rel: &str) -> Artifact {
        Artifact { full: self.path(rel), label: rel.to_string() }
    }

    fn require(&self, stage: &'static str, rel: &str, producer: &'static str) -> Result<Artifact, CliError> {
        let a = self.artifact(rel);
        if a.full.is_file() {
            Ok(a)
        } else {
            Err(CliError::Dependency { stage, artifact: rel.to_string(), producer })
        }
    }

    fn write_manifest(&self, stage: &str, inputs: &[&Artifact], outputs: &[Artifact]) -> Result<PathBuf, CliError> {
        write_json(&self.path(CONFIG_COPY), &self.persisted_config())?;
        let manifest = Manifest {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_hash.clone(),
            seed: self.cfg.seed,
            inputs: inputs.iter().map(|a| a.digest()).collect::<Result<_, _>>()?,
            outputs: outputs.iter().map(Artifact::digest).collect::<Result<_, _>>()?,
        };
        let path = self.path(&manifest_path(stage));
        write_json(&path, &manifest)?;
        Ok(path)
    }

    fn persisted_config(&self) -> RunConfig {
        RunConfig { out: None, ..self.cfg.clone() }
    }

    /// Resolves the grid series and zones for `stage`.
    pub fn source(&self, stage: &'static str) -> Result<Source, CliError> {
        if self.cfg.synth.is_some() {
            let truth_file = self.require(stage, SYNTH_TRUTH, "synth")?;
            let series = self.require(stage, SYNTH_GRID, "synth")?;
            let zones = self.require(stage, SYNTH_ZONES, "synth")?;
            let truth: GroundTruth = read_json(&truth_file.full)?;
            Ok(Source { series, zones, grid: truth.grid, geo_origin: truth.geo_origin, extra: vec![truth_file] })
        } else {
            let inp = self.cfg.inputs.as_ref().expect("validated: inputs present without synth");
            let art = |p: &Path| Artifact { full: self.base.join(p), label: label_of(p) };
            Ok(Source {
                series: art(&inp.grid_csv),
                zones: art(&inp.zones_geojson),
                grid: inp.grid,
                geo_origin: inp.geo_origin,
                extra: vec![],
            })
        }
    }
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
    let t = Instant::now();
    let r = f();
    log::info!("{stage} finished in {:.2?}", t.elapsed());
    r
}

pub fn synth(run: &Run) -> Result<PathBuf, CliError> {
    timed("synth", || {
        let cfg = run.cfg.synth_config().ok_or_else(|| CliError::Config("configuration has no `synth` section".into()))?;
        let out = synth_generate(&cfg)?;
        let dir = run.path("synth");
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        let grid = run.artifact(SYNTH_GRID);
        cellshare_core::series::write_series_csv(&grid.full, &out.series)?;
        let zones = run.artifact(SYNTH_ZONES);
        let fc = zones_feature_collection(&out.city.zones, cfg.geo_origin, None)?;
        write_zones_geojson(&zones.full, &fc)?;
        let truth = run.artifact(SYNTH_TRUTH);
        write_json(&truth.full, &out.truth)?;
        run.write_manifest("synth", &[], &[grid, zones, truth])
    })
}

pub fn ingest(run: &Run) -> Result<PathBuf, CliError> {
    timed("ingest", || {
        let src = run.source("ingest")?;
        let loaded = load_series(&src.series.full, &src.grid)?;
        for d in &loaded.dropped_days {
            log::warn!("dropped incomplete day {d}");
        }
        let zones = read_zones(&src.zones.full, src.geo_origin)?;
        let ctx = LinkageContext::new(src.grid, zones)?;
        let partially_covered = ctx
            .weights()
            .iter()
            .filter(|w| w.covered_fraction < 1.0 - 1e-9)
            .map(|w| w.zone_id.clone())
            .collect();
        let region = run.cfg.cluster.ddp_region.unwrap_or_else(|| src.grid.whole());
        let ddp = compute_ddp(&loaded.series, &region)?;
        let ddp_file = run.artifact(INGEST_DDP);
        write_ddp(&ddp_file.full, &ddp)?;
        let report = DatasetReport {
            grid: src.grid,
            geo_origin: src.geo_origin,
            series: src.series.label.clone(),
            zones: src.zones.label.clone(),
            n_days: loaded.series.days.len(),
            dates: loaded.series.dates(),
            dropped_days: loaded.dropped_days,
            n_zones: ctx.zones().len(),
            partially_covered,
            ddp_region: region,
        };
        let dataset = run.artifact(INGEST_DATASET);
        write_json(&dataset.full, &report)?;
        let mut inputs = vec![&src.series, &src.zones];
        inputs.extend(&src.extra);
        run.write_manifest("ingest", &inputs, &[dataset, ddp_file])
    })
}

pub fn features(run: &Run) -> Result<PathBuf, CliError> {
    timed("features", || {
        let dataset = run.require("features", INGEST_DATASET, "ingest")?;
        let src = run.source("features")?;
        let series = load_series(&src.series.full, &src.grid)?.series;
        let standardized = standardize(&series, run.cfg.cluster.scope)?;
        drop(series);
        let hog = run.cfg.hog;
        let frame = hog.layout(src.grid.n_rows, src.grid.n_cols)?;
        let daily = daily_features(&standardized, &hog)?;
        let rows: Vec<(NaiveDate, Vec<f64>)> = daily.into_iter().map(|d| (d.day, d.values)).collect();
        let csv = run.artifact(FEATURES_CSV);
        write_features(&csv.full, &rows)?;
        let layout = run.artifact(FEATURES_LAYOUT);
        let report = FeatureLayoutReport {
            frame,
            frame_features: frame.len(),
            quarters: QUARTERS_PER_DAY,
            day_features: frame.len() * QUARTERS_PER_DAY,
            n_days: rows.len(),
            hog,
            scope: run.cfg.cluster.scope,
        };
        write_json(&layout.full, &report)?;
        run.write_manifest("features", &[&dataset, &src.series], &[csv, layout])
    })
}

pub fn cluster(run: &Run) -> Result<PathBuf, CliError> {
    timed("cluster", || {
        let features = run.require("cluster", FEATURES_CSV, "features")?;
        let ddp_file = run.require("cluster", INGEST_DDP, "ingest")?;
        let rows = read_features(&features.full)?;
        let ddp = read_ddp(&ddp_file.full)?;
        let feature_dates: Vec<NaiveDate> = rows.iter().map(|r| r.0).collect();
        let ddp_dates: Vec<NaiveDate> = ddp.iter().map(|c| c.day).collect();
        if feature_dates != ddp_dates {
            return Err(CliError::format(&features.full, "days do not match the daily profiles; rerun ingest and features"));
        }
        let vectors: Vec<&[f64]> = rows.iter().map(|r| r.1.as_slice()).collect();
        let c = cluster_days(&vectors, ddp, &run.cfg.classify_params())?;

        let assignments: Vec<AssignmentRow> = c
            .labels
            .iter()
            .map(|l| AssignmentRow { date: l.date, kmeans_cluster: l.kmeans_cluster, functional_subgroup: l.functional_subgroup })
            .collect();
        let csv = run.artifact(CLUSTER_ASSIGNMENTS);
        write_assignments(&csv.full, &assignments)?;
        let mut groups = BTreeMap::new();
        for a in &assignments {
            *groups.entry(a.group()).or_insert(0) += 1;
        }
        let r = &c.kmeans.result;
        let report = ClusterReport {
            seed: run.cfg.seed,
            n_days: assignments.len(),
            feature_len: c.feature_len,
            k: c.kmeans.k,
            degenerate: c.kmeans.degenerate,
            k_scores: c.kmeans.scores.clone(),
            inertia: r.inertia,
            iterations: r.iterations,
            converged: r.converged,
            inertia_history: r.inertia_history.clone(),
            subgroups: c
                .subgroups
                .iter()
                .map(|s| SubgroupReport {
                    parent: s.parent,
                    g: s.g,
                    n_days: s.assignment.len(),
                    scores: s.scores.clone(),
                    basis: s.basis,
                })
                .collect(),
            groups,
        };
        let report_file = run.artifact(CLUSTER_REPORT);
        write_json(&report_file.full, &report)?;
        run.write_manifest("cluster", &[&features, &ddp_file], &[csv, report_file])
    })
}

fn svg_name(group: &str, label: &str, panels: usize) -> String {
    if panels == 1 && label == "all" {
        format!("{group}.svg")
    } else {
        format!("{group}_{label}.svg")
    }
}

pub fn fboxplot(run: &Run, plot: bool) -> Result<PathBuf, CliError> {
    timed("fboxplot", || {
        let assignments_file = run.require("fboxplot", CLUSTER_ASSIGNMENTS, "cluster")?;
        let ddp_file = run.require("fboxplot", INGEST_DDP, "ingest")?;
        let assignments = read_assignments(&assignments_file.full)?;
        let ddp = read_ddp(&ddp_file.full)?;
        let by_date: BTreeMap<NaiveDate, &DdpCurve> = ddp.iter().map(|c| (c.day, c)).collect();
        let mut members: BTreeMap<String, Vec<DdpCurve>> = BTreeMap::new();
        for a in &assignments {
            let curve = by_date
                .get(&a.date)
                .ok_or_else(|| CliError::format(&assignments_file.full, format!("{} has no daily profile", a.date)))?;
            members.entry(a.group()).or_default().push((*curve).clone());
        }

        let groups_dir = run.path(FBOXPLOT_GROUPS);
        if groups_dir.exists() {
            fs::remove_dir_all(&groups_dir).map_err(CliError::io(&groups_dir))?;
        }
        let mut outputs = Vec::new();
        let mut index = Vec::new();
        for (group, curves) in members {
            let panels = group_boxplots(&curves, run.cfg.boxplot.by_month)?;
            let rel = format!("{FBOXPLOT_GROUPS}/{group}.json");
            let file = run.artifact(&rel);
            if plot {
                for p in &panels {
                    let ids: Vec<(String, Vec<f64>)> = curves
                        .iter()
                        .filter(|c| p.label == "all" || c.day.format("%Y-%m").to_string() == p.label)
                        .map(|c| (c.day.to_string(), c.values.clone()))
                        .collect();
                    let svg = run.artifact(&format!("{FBOXPLOT_GROUPS}/{}", svg_name(&group, &p.label, panels.len())));
                    write_text(&svg.full, &boxplot_svg(&format!("group {group}, {}", p.label), &p.outcome, &ids))?;
                    outputs.push(svg);
                }
            }
            index.push(GroupIndex {
                group: group.clone(),
                n_days: curves.len(),
                file: rel.clone(),
                panels: panels
                    .iter()
                    .map(|p| PanelIndex {
                        label: p.label.clone(),
                        boxplot: matches!(p.outcome, BoxplotOutcome::Boxplot(_)),
                        median_id: p.outcome.boxplot().map(|b| b.median_id.clone()),
                        outlier_ids: p.outcome.boxplot().map(|b| b.outlier_ids.clone()).unwrap_or_default(),
                    })
                    .collect(),
            });
            write_json(&file.full, &GroupFile { group, curves, panels })?;
            outputs.push(file);
        }
        let index_file = run.artifact(FBOXPLOT_INDEX);
        write_json(&index_file.full, &index)?;
        outputs.insert(0, index_file);
        outputs.sort_by(|a, b| a.label.cmp(&b.label));
        run.write_manifest("fboxplot", &[&assignments_file, &ddp_file], &outputs)
    })
}

/// The snapshot a run links at: configured, or the first loaded day.
pub fn snapshot(run: &Run, dataset: &DatasetReport) -> Result<Snapshot, CliError> {
    let date = match run.cfg.linkage.snapshot_date {
        Some(d) => d,
        None => *dataset
            .dates
            .first()
            .ok_or_else(|| CliError::Config("dataset has no complete day to link".into()))?,
    };
    if !dataset.dates.contains(&date) {
        return Err(CliError::Config(format!("snapshot date {date} is not in the dataset")));
    }
    Ok(Snapshot { date, quarter: run.cfg.linkage.snapshot_quarter })
}

/// Zones and overlap weights for the run's source.
pub fn linkage_context(run: &Run, src: &Source) -> Result<LinkageContext, CliError> {
    let zones = read_zones(&src.zones.full, src.geo_origin)?;
    Ok(LinkageContext::new(src.grid, zones)?.with_mode(run.cfg.linkage.mode))
}

pub fn check_region_snapshot(sel: &RegionSelection, snapshot: &Snapshot) -> Result<(), String> {
    match sel.snapshot {
        Some(s) if s != *snapshot => {
            Err(format!("region asks for snapshot {} q{} but {} q{} is loaded", s.date, s.quarter, snapshot.date, snapshot.quarter))
        }
        _ => Ok(()),
    }
}

pub fn linkage(run: &Run) -> Result<PathBuf, CliError> {
    timed("linkage", || {
        let dataset_file = run.require("linkage", INGEST_DATASET, "ingest")?;
        let dataset: DatasetReport = read_json(&dataset_file.full)?;
        let src = run.source("linkage")?;
        let snap = snapshot(run, &dataset)?;
        for r in &run.cfg.linkage.regions {
            check_region_snapshot(r, &snap).map_err(CliError::Config)?;
        }
        let frame = load_frame(&src.series.full, &src.grid, snap.date, usize::from(snap.quarter))?;
        let ctx = linkage_context(run, &src)?;
        let (records, summary) = ctx.ratio_table(&frame)?;

        let ratios = run.artifact(LINKAGE_RATIOS);
        write_ratios(&ratios.full, &records)?;
        let zones = run.artifact(LINKAGE_ZONES);
        write_zones_geojson(&zones.full, &zones_feature_collection(ctx.zones(), src.geo_origin, Some(&records))?)?;
        let summary_file = run.artifact(LINKAGE_SUMMARY);
        write_json(&summary_file.full, &SummaryReport { snapshot: snap, n_zones: records.len(), summary })?;
        let share = run.artifact(LINKAGE_SHARE);
        let report = market_share_report(&ctx, &run.cfg.linkage, &run.cfg.linkage.regions, &records)?;
        if let Some(f) = &report.failure {
            log::warn!("market share not estimated: {f}");
        }
        write_json(&share.full, &report)?;
        let mut inputs = vec![&dataset_file, &src.series, &src.zones];
        inputs.extend(&src.extra);
        run.write_manifest("linkage", &inputs, &[ratios, zones, summary_file, share])
    })
}

/// Runs every stage in order; the generator only for synthetic configs.
pub fn pipeline(run: &Run, plot: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut manifests = Vec::new();
    if run.cfg.synth.is_some() {
        manifests.push(synth(run)?);
    }
    manifests.push(ingest(run)?);
    manifests.push(features(run)?);
    manifests.push(cluster(run)?);
    manifests.push(fboxplot(run, plot || run.cfg.boxplot.plot)?);
    manifests.push(linkage(run)?);
    Ok(manifests)
}
