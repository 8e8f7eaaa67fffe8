//! Grid time series: ingestion, standardization and daily density profiles.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use log::warn;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{CellRange, GridSpec};

/// Fifteen-minute intervals per day.
pub const QUARTERS_PER_DAY: usize = 96;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("region out of bounds: {0}")]
    Bounds(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SeriesError + '_ {
    move |source| SeriesError::Io { path: path.display().to_string(), source }
}

/// One raster of average connected phones at a given quarter of a day.
/// `values[[row, col]]` follows the [`GridSpec`] cell layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFrame {
    pub date: NaiveDate,
    pub quarter: u8,
    pub values: Array2<f64>,
}

impl GridFrame {
    pub fn value(&self, cell_index: usize) -> f64 {
        let n_cols = self.values.ncols();
        self.values[[cell_index / n_cols, cell_index % n_cols]]
    }

    pub fn matches(&self, grid: &GridSpec) -> bool {
        self.values.dim() == (grid.n_rows, grid.n_cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub frames: Vec<GridFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub source: String,
    pub units: String,
}

impl Default for SeriesMetadata {
    fn default() -> Self {
        Self { source: "unknown".into(), units: "connected phones".into() }
    }
}

/// Complete days of grid frames, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub grid: GridSpec,
    pub days: Vec<DayRecord>,
    pub metadata: SeriesMetadata,
}

impl GridSeries {
    pub fn new(grid: GridSpec, days: Vec<DayRecord>, metadata: SeriesMetadata) -> Result<Self, SeriesError> {
        grid.validate().map_err(|e| SeriesError::Config(e.to_string()))?;
        for w in days.windows(2) {
            if w[0].date >= w[1].date {
                return Err(SeriesError::Schema(format!("days out of order at {}", w[1].date)));
            }
        }
        for d in &days {
            if d.frames.len() != QUARTERS_PER_DAY {
                return Err(SeriesError::Schema(format!("{} has {} quarters", d.date, d.frames.len())));
            }
            for (q, f) in d.frames.iter().enumerate() {
                if f.quarter as usize != q || f.date != d.date {
                    return Err(SeriesError::Schema(format!("{} frame {q} mislabelled", d.date)));
                }
                if !f.matches(&grid) {
                    return Err(SeriesError::Schema(format!(
                        "{} q{q}: frame is {:?}, grid is {}x{}",
                        d.date,
                        f.values.dim(),
                        grid.n_rows,
                        grid.n_cols
                    )));
                }
                if f.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(SeriesError::Schema(format!("{} q{q}: negative or non-finite value", d.date)));
                }
            }
        }
        Ok(Self { grid, days, metadata })
    }

    pub fn frame(&self, date: NaiveDate, quarter: usize) -> Option<&GridFrame> {
        self.days.iter().find(|d| d.date == date).and_then(|d| d.frames.get(quarter))
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub series: GridSeries,
    /// Days discarded because at least one quarter was incomplete.
    pub dropped_days: Vec<NaiveDate>,
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>, SeriesError> {
    let f = File::open(path).map_err(io_err(path))?;
    let r = BufReader::new(f);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(r)))
    } else {
        Ok(Box::new(r))
    }
}

struct CellRecord {
    date: NaiveDate,
    quarter: usize,
    row: usize,
    col: usize,
    value: f64,
}

fn parse_record(rec: &csv::StringRecord, line: u64, grid: &GridSpec) -> Result<CellRecord, SeriesError> {
    let perr = |message: String| SeriesError::Parse { line, message };
    if rec.len() != 5 {
        return Err(perr(format!("expected 5 fields, found {}", rec.len())));
    }
    let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
        .map_err(|e| perr(format!("bad date {:?}: {e}", &rec[0])))?;
    let quarter: usize = rec[1].trim().parse().map_err(|_| perr(format!("bad quarter {:?}", &rec[1])))?;
    if quarter >= QUARTERS_PER_DAY {
        return Err(perr(format!("quarter {quarter} outside 0..=95")));
    }
    let row: usize = rec[2].trim().parse().map_err(|_| perr(format!("bad row {:?}", &rec[2])))?;
    let col: usize = rec[3].trim().parse().map_err(|_| perr(format!("bad col {:?}", &rec[3])))?;
    let value: f64 = rec[4].trim().parse().map_err(|_| perr(format!("bad value {:?}", &rec[4])))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(perr(format!("value {value} must be finite and non-negative")));
    }
    if row >= grid.n_rows || col >= grid.n_cols {
        return Err(SeriesError::Schema(format!(
            "line {line}: cell ({row}, {col}) outside the {}x{} grid",
            grid.n_rows, grid.n_cols
        )));
    }
    Ok(CellRecord { date, quarter, row, col, value })
}

fn for_each_record(
    path: &Path,
    grid: &GridSpec,
    mut f: impl FnMut(CellRecord, u64) -> Result<(), SeriesError>,
) -> Result<(), SeriesError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(open_reader(path)?);
    let headers = rdr.headers().map_err(|e| SeriesError::Parse { line: 1, message: e.to_string() })?.clone();
    let expected = ["date", "quarter", "row", "col", "value"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(SeriesError::Schema(format!("header {:?}, expected {expected:?}", headers)));
    }
    let mut rec = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut rec).map_err(|e| SeriesError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = rec.position().map_or(0, |p| p.line());
        f(parse_record(&rec, line, grid)?, line)?;
    }
    Ok(())
}

/// Reads a grid CSV (`date,quarter,row,col,value`, optionally gzipped by
/// `.gz` extension). Days missing any cell of any quarter are dropped with a
/// warning; duplicate cell records are a schema error.
pub fn load_series(path: &Path, grid: &GridSpec) -> Result<LoadedSeries, SeriesError> {
    grid.validate().map_err(|e| SeriesError::Config(e.to_string()))?;
    let n_cells = grid.n_cells();
    let per_day = QUARTERS_PER_DAY * n_cells;
    let mut acc: BTreeMap<NaiveDate, (Vec<f64>, usize)> = BTreeMap::new();
    for_each_record(path, grid, |r, line| {
        let (vals, filled) = acc.entry(r.date).or_insert_with(|| (vec![f64::NAN; per_day], 0));
        let slot = &mut vals[r.quarter * n_cells + grid.cell_index(r.row, r.col)];
        if !slot.is_nan() {
            return Err(SeriesError::Schema(format!(
                "line {line}: duplicate record for {} q{} ({}, {})",
                r.date, r.quarter, r.row, r.col
            )));
        }
        *slot = r.value;
        *filled += 1;
        Ok(())
    })?;

    let mut days = Vec::new();
    let mut dropped = Vec::new();
    for (date, (vals, filled)) in acc {
        if filled != per_day {
            warn!("dropping {date}: {filled} of {per_day} cell-quarters present");
            dropped.push(date);
            continue;
        }
        let frames = vals
            .chunks_exact(n_cells)
            .enumerate()
            .map(|(q, chunk)| GridFrame {
                date,
                quarter: q as u8,
                values: Array2::from_shape_vec((grid.n_rows, grid.n_cols), chunk.to_vec())
                    .expect("chunk length matches grid"),
            })
            .collect();
        days.push(DayRecord { date, frames });
    }
    let metadata = SeriesMetadata { source: path.display().to_string(), ..Default::default() };
    Ok(LoadedSeries { series: GridSeries::new(*grid, days, metadata)?, dropped_days: dropped })
}

/// Reads a single (date, quarter) frame from a grid CSV without materializing
/// the rest of the file.
pub fn load_frame(path: &Path, grid: &GridSpec, date: NaiveDate, quarter: usize) -> Result<GridFrame, SeriesError> {
    let mut vals = vec![f64::NAN; grid.n_cells()];
    let mut filled = 0;
    for_each_record(path, grid, |r, line| {
        if r.date == date && r.quarter == quarter {
            let slot = &mut vals[grid.cell_index(r.row, r.col)];
            if !slot.is_nan() {
                return Err(SeriesError::Schema(format!("line {line}: duplicate record")));
            }
            *slot = r.value;
            filled += 1;
        }
        Ok(())
    })?;
    if filled != grid.n_cells() {
        return Err(SeriesError::Schema(format!(
            "{date} q{quarter}: {filled} of {} cells present",
            grid.n_cells()
        )));
    }
    Ok(GridFrame {
        date,
        quarter: quarter as u8,
        values: Array2::from_shape_vec((grid.n_rows, grid.n_cols), vals).expect("length matches grid"),
    })
}

/// Writes frames in the ingestion CSV schema, gzipped when the path ends in `.gz`.
pub fn write_frames_csv<'a>(path: &Path, frames: impl IntoIterator<Item = &'a GridFrame>) -> Result<(), SeriesError> {
    let file = File::create(path).map_err(io_err(path))?;
    let sink: Box<dyn Write> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzEncoder::new(BufWriter::new(file), Compression::new(6)))
    } else {
        Box::new(BufWriter::new(file))
    };
    let mut w = csv::Writer::from_writer(sink);
    let wr = |e: csv::Error| SeriesError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(["date", "quarter", "row", "col", "value"]).map_err(wr)?;
    for f in frames {
        let date = f.date.format("%Y-%m-%d").to_string();
        let q = f.quarter.to_string();
        for ((r, c), v) in f.values.indexed_iter() {
            w.write_record([date.as_str(), q.as_str(), &r.to_string(), &c.to_string(), &v.to_string()])
                .map_err(wr)?;
        }
    }
    let inner = w.into_inner().map_err(|e| SeriesError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    drop(inner);
    Ok(())
}

pub fn write_series_csv(path: &Path, series: &GridSeries) -> Result<(), SeriesError> {
    write_frames_csv(path, series.days.iter().flat_map(|d| d.frames.iter()))
}

/// Whether min/max rescaling uses one range for the whole series or one per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeScope {
    #[default]
    Global,
    PerFrame,
}

/// A day of frames rescaled into [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDay {
    pub date: NaiveDate,
    pub frames: Vec<Array2<f64>>,
}

fn rescale(a: &Array2<f64>, lo: f64, hi: f64) -> Array2<f64> {
    if hi > lo {
        let span = hi - lo;
        // Clamp guards the endpoints against rounding just outside [0, 100].
        a.mapv(|v| (100.0 * (v - lo) / span).clamp(0.0, 100.0))
    } else {
        Array2::zeros(a.dim())
    }
}

/// Affine rescale `Z = 100 (X - m) / (M - m)`. A constant range maps to zeros.
pub fn standardize(series: &GridSeries, scope: StandardizeScope) -> Result<Vec<StandardizedDay>, SeriesError> {
    if series.days.is_empty() {
        return Err(SeriesError::Empty("cannot standardize a series with no days".into()));
    }
    let (gmin, gmax) = series
        .days
        .iter()
        .flat_map(|d| d.frames.iter())
        .flat_map(|f| f.values.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(series
        .days
        .iter()
        .map(|d| StandardizedDay {
            date: d.date,
            frames: d
                .frames
                .iter()
                .map(|f| match scope {
                    StandardizeScope::Global => rescale(&f.values, gmin, gmax),
                    StandardizeScope::PerFrame => {
                        let (lo, hi) = f
                            .values
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                        rescale(&f.values, lo, hi)
                    }
                })
                .collect(),
        })
        .collect())
}

/// Daily density profile: per-quarter total of raw values over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpCurve {
    pub day: NaiveDate,
    pub values: Vec<f64>,
}

pub fn compute_ddp(series: &GridSeries, region: &CellRange) -> Result<Vec<DdpCurve>, SeriesError> {
    if !region.is_within(&series.grid) {
        return Err(SeriesError::Bounds(format!(
            "{region:?} not inside {}x{} grid",
            series.grid.n_rows, series.grid.n_cols
        )));
    }
    Ok(series
        .days
        .iter()
        .map(|d| DdpCurve {
            day: d.date,
            values: d
                .frames
                .iter()
                .map(|f| {
                    f.values
                        .slice(s![region.row_start..region.row_end, region.col_start..region.col_end])
                        .iter()
                        .sum()
                })
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::PlanarPoint;

    fn grid() -> GridSpec {
        GridSpec::new(PlanarPoint::default(), 150.0, 2, 3).unwrap()
    }

    fn day(date: NaiveDate, f: impl Fn(usize, usize, usize) -> f64) -> DayRecord {
        DayRecord {
            date,
            frames: (0..QUARTERS_PER_DAY)
                .map(|q| GridFrame {
                    date,
                    quarter: q as u8,
                    values: Array2::from_shape_fn((2, 3), |(r, c)| f(q, r, c)),
                })
                .collect(),
        }
    }

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn series(days: Vec<DayRecord>) -> GridSeries {
        GridSeries::new(grid(), days, SeriesMetadata::default()).unwrap()
    }

    #[test]
    fn standardize_global_affine() {
        let s = series(vec![day(d("2015-10-28"), |q, r, c| if q == 0 && r == 0 && c == 0 { 200.0 } else { 50.0 }),
            day(d("2015-10-29"), |_, r, c| if r == 1 && c == 2 { 0.0 } else { 50.0 })]);
        let z = standardize(&s, StandardizeScope::Global).unwrap();
        assert_eq!(z[0].frames[0][[0, 0]], 100.0);
        assert_eq!(z[0].frames[5][[0, 1]], 25.0);
        assert_eq!(z[1].frames[3][[1, 2]], 0.0);
    }

    #[test]
    fn standardize_constant_is_zero() {
        let s = series(vec![day(d("2015-10-28"), |_, _, _| 7.0)]);
        for scope in [StandardizeScope::Global, StandardizeScope::PerFrame] {
            let z = standardize(&s, scope).unwrap();
            assert!(z[0].frames.iter().all(|f| f.iter().all(|v| *v == 0.0)));
        }
    }

    #[test]
    fn standardize_per_frame_fills_each_frame() {
        let s = series(vec![day(d("2015-10-28"), |q, r, c| (q + 1) as f64 * (r * 3 + c) as f64)]);
        let z = standardize(&s, StandardizeScope::PerFrame).unwrap();
        for f in &z[0].frames {
            assert_eq!(f[[0, 0]], 0.0);
            assert_eq!(f[[1, 2]], 100.0);
        }
    }

    #[test]
    fn standardize_empty_errors() {
        let s = series(vec![]);
        assert!(matches!(standardize(&s, StandardizeScope::Global), Err(SeriesError::Empty(_))));
    }

    #[test]
    fn ddp_single_cell_and_bounds() {
        let s = series(vec![day(d("2015-10-28"), |q, r, c| (q * 10 + r * 3 + c) as f64)]);
        let one = compute_ddp(&s, &CellRange { row_start: 1, row_end: 2, col_start: 2, col_end: 3 }).unwrap();
        assert_eq!(one[0].values.len(), QUARTERS_PER_DAY);
        for (q, v) in one[0].values.iter().enumerate() {
            assert_eq!(*v, (q * 10 + 5) as f64);
        }
        assert!(matches!(
            compute_ddp(&s, &CellRange { row_start: 0, row_end: 3, col_start: 0, col_end: 1 }),
            Err(SeriesError::Bounds(_))
        ));
    }

    #[test]
    fn series_rejects_bad_days() {
        let mut bad = day(d("2015-10-28"), |_, _, _| 1.0);
        bad.frames.pop();
        assert!(GridSeries::new(grid(), vec![bad], SeriesMetadata::default()).is_err());
        let neg = day(d("2015-10-28"), |q, _, _| if q == 4 { -1.0 } else { 1.0 });
        assert!(GridSeries::new(grid(), vec![neg], SeriesMetadata::default()).is_err());
        let a = day(d("2015-10-29"), |_, _, _| 1.0);
        let b = day(d("2015-10-28"), |_, _, _| 1.0);
        assert!(GridSeries::new(grid(), vec![a, b], SeriesMetadata::default()).is_err());
    }
}
