//! On-disk layout of a run directory and readers/writers for its files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use cellshare_core::linkage::RatioRecord;
use cellshare_core::series::DdpCurve;
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::CliError;

pub const SYNTH_GRID: &str = "synth/grid.csv.gz";
pub const SYNTH_ZONES: &str = "synth/zones.geojson";
pub const SYNTH_TRUTH: &str = "synth/ground_truth.json";
pub const INGEST_DATASET: &str = "ingest/dataset.json";
pub const INGEST_DDP: &str = "ingest/ddp.csv";
pub const FEATURES_CSV: &str = "features/features.csv";
pub const FEATURES_LAYOUT: &str = "features/layout.json";
pub const CLUSTER_ASSIGNMENTS: &str = "cluster/assignments.csv";
pub const CLUSTER_REPORT: &str = "cluster/report.json";
pub const FBOXPLOT_INDEX: &str = "fboxplot/index.json";
pub const FBOXPLOT_GROUPS: &str = "fboxplot/groups";
pub const LINKAGE_RATIOS: &str = "linkage/ratios.csv";
pub const LINKAGE_ZONES: &str = "linkage/zones_ratio.geojson";
pub const LINKAGE_SUMMARY: &str = "linkage/summary.json";
pub const LINKAGE_SHARE: &str = "linkage/market_share.json";
pub const SERVE_REGIONS: &str = "serve/regions.json";
pub const CONFIG_COPY: &str = "config.json";

pub fn manifest_path(stage: &str) -> String {
    format!("{stage}/manifest.json")
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    ensure_parent(path)?;
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::format(path, e))?;
    bytes.push(b'\n');
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, value)?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let f = File::open(path).map_err(CliError::io(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::format(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path).map_err(CliError::io(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(CliError::io(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the run directory, or as configured for external inputs.
    pub path: String,
    pub sha256: String,
}

/// Provenance record written by every stage. Wall-clock timings are logged
/// but kept out of the file so reruns stay byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// A file a stage reads or writes: where it is and how to name it.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub full: PathBuf,
    pub label: String,
}

impl Artifact {
    pub fn digest(&self) -> Result<FileDigest, CliError> {
        Ok(FileDigest { path: self.label.clone(), sha256: sha256_file(&self.full)? })
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e)
}

fn float(v: f64) -> String {
    // Debug formatting round-trips exactly and switches to exponent notation
    // for very small or large magnitudes.
    format!("{v:?}")
}

fn parse_float(path: &Path, s: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::format(path, format!("not a number: {s:?}")))
}

fn parse_date(path: &Path, s: &str) -> Result<NaiveDate, CliError> {
    s.trim().parse().map_err(|_| CliError::format(path, format!("not an ISO date: {s:?}")))
}

/// One row per day: `date,<prefix>0,<prefix>1,...`.
fn write_day_rows<'a>(
    path: &Path,
    prefix: &str,
    width: usize,
    rows: impl IntoIterator<Item = (NaiveDate, &'a [f64])>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let header = std::iter::once("date".to_string()).chain((0..width).map(|i| format!("{prefix}{i}")));
    w.write_record(header).map_err(csv_err(path))?;
    for (date, values) in rows {
        if values.len() != width {
            return Err(CliError::format(path, format!("row for {date} has {} values, expected {width}", values.len())));
        }
        let rec = std::iter::once(date.to_string()).chain(values.iter().map(|v| float(*v)));
        w.write_record(rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn read_day_rows(path: &Path) -> Result<Vec<(NaiveDate, Vec<f64>)>, CliError> {
    let f = File::open(path).map_err(CliError::io(path))?;
    let mut r = csv::Reader::from_reader(BufReader::new(f));
    let width = r.headers().map_err(csv_err(path))?.len().saturating_sub(1);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let date = parse_date(path, &rec[0])?;
        let values = rec.iter().skip(1).map(|s| parse_float(path, s)).collect::<Result<Vec<_>, _>>()?;
        if values.len() != width {
            return Err(CliError::format(path, format!("row for {date} has {} values, header has {width}", values.len())));
        }
        out.push((date, values));
    }
    Ok(out)
}

pub fn write_features(path: &Path, rows: &[(NaiveDate, Vec<f64>)]) -> Result<(), CliError> {
    let width = rows.first().map_or(0, |r| r.1.len());
    write_day_rows(path, "f", width, rows.iter().map(|(d, v)| (*d, v.as_slice())))
}

pub fn read_features(path: &Path) -> Result<Vec<(NaiveDate, Vec<f64>)>, CliError> {
    read_day_rows(path)
}

pub fn write_ddp(path: &Path, curves: &[DdpCurve]) -> Result<(), CliError> {
    let width = curves.first().map_or(0, |c| c.values.len());
    write_day_rows(path, "q", width, curves.iter().map(|c| (c.day, c.values.as_slice())))
}

pub fn read_ddp(path: &Path) -> Result<Vec<DdpCurve>, CliError> {
    Ok(read_day_rows(path)?.into_iter().map(|(day, values)| DdpCurve { day, values }).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub date: NaiveDate,
    pub kmeans_cluster: usize,
    pub functional_subgroup: usize,
}

impl AssignmentRow {
    pub fn group(&self) -> String {
        format!("{}-{}", self.kmeans_cluster, self.functional_subgroup)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = File::open(path).map_err(CliError::io(path))?;
    csv::Reader::from_reader(BufReader::new(f)).deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

pub fn write_assignments(path: &Path, rows: &[AssignmentRow]) -> Result<(), CliError> {
    write_rows(path, rows)
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRow>, CliError> {
    read_rows(path)
}

pub fn write_ratios(path: &Path, records: &[RatioRecord]) -> Result<(), CliError> {
    write_rows(path, records)
}

pub fn read_ratios(path: &Path) -> Result<Vec<RatioRecord>, CliError> {
    read_rows(path)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}
