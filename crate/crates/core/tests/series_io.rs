use std::io::Write;

use cellshare_core::geo::{CellRange, GridSpec, PlanarPoint};
use cellshare_core::series::{
    compute_ddp, load_frame, load_series, standardize, write_series_csv, DayRecord, GridFrame, GridSeries,
    SeriesError, SeriesMetadata, StandardizeScope, QUARTERS_PER_DAY,
};
use chrono::NaiveDate;
use ndarray::Array2;
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(PlanarPoint::default(), 150.0, 3, 4).unwrap()
}

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn csv_for(days: &[&str], skip: Option<(&str, usize)>, neg_at: Option<usize>) -> String {
    let g = grid();
    let mut out = String::from("date,quarter,row,col,value\n");
    let mut n = 0;
    for d in days {
        for q in 0..QUARTERS_PER_DAY {
            if skip == Some((d, q)) {
                continue;
            }
            for r in 0..g.n_rows {
                for c in 0..g.n_cols {
                    n += 1;
                    let v = if neg_at == Some(n) { -3.0 } else { (q + r * 10 + c) as f64 * 0.5 };
                    out.push_str(&format!("{d},{q},{r},{c},{v}\n"));
                }
            }
        }
    }
    out
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn loads_two_complete_days() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(&dir, "g.csv", &csv_for(&["2015-10-28", "2015-10-29"], None, None));
    let loaded = load_series(&p, &grid()).unwrap();
    assert_eq!(loaded.series.days.len(), 2);
    assert!(loaded.dropped_days.is_empty());
    for d in &loaded.series.days {
        assert_eq!(d.frames.len(), QUARTERS_PER_DAY);
    }
    assert_eq!(loaded.series.days[1].frames[84].values[[2, 3]], (84 + 20 + 3) as f64 * 0.5);
}

#[test]
fn drops_day_with_missing_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let body = csv_for(&["2015-10-28", "2015-10-29"], Some(("2015-10-29", 40)), None);
    let p = write_tmp(&dir, "g.csv", &body);
    let loaded = load_series(&p, &grid()).unwrap();
    assert_eq!(loaded.series.days.len(), 1);
    assert_eq!(loaded.dropped_days, vec![date("2015-10-29")]);
}

#[test]
fn negative_value_names_line() {
    let dir = tempfile::tempdir().unwrap();
    // record 7 sits on line 8 (after the header)
    let p = write_tmp(&dir, "g.csv", &csv_for(&["2015-10-28"], None, Some(7)));
    match load_series(&p, &grid()) {
        Err(SeriesError::Parse { line, message }) => {
            assert_eq!(line, 8);
            assert!(message.contains("non-negative"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn malformed_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(&dir, "a.csv", "date,quarter,row,col,value\n2015-10-28,0,0,0,abc\n");
    assert!(matches!(load_series(&p, &grid()), Err(SeriesError::Parse { line: 2, .. })));
    let p = write_tmp(&dir, "b.csv", "date,quarter,row,col,value\n2015-10-28,0,9,0,1\n");
    assert!(matches!(load_series(&p, &grid()), Err(SeriesError::Schema(_))));
    let p = write_tmp(&dir, "c.csv", "day,q,r,c,v\n");
    assert!(matches!(load_series(&p, &grid()), Err(SeriesError::Schema(_))));
    let p = write_tmp(&dir, "d.csv", "date,quarter,row,col,value\n2015-10-28,96,0,0,1\n");
    assert!(matches!(load_series(&p, &grid()), Err(SeriesError::Parse { .. })));
    let p = write_tmp(&dir, "e.csv", "date,quarter,row,col,value\n2015-10-28,0,0,0,1\n2015-10-28,0,0,0,2\n");
    assert!(matches!(load_series(&p, &grid()), Err(SeriesError::Schema(_))));
    assert!(matches!(load_series(&dir.path().join("missing.csv"), &grid()), Err(SeriesError::Io { .. })));
}

#[test]
fn gzip_round_trip_and_single_frame() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(&dir, "g.csv", &csv_for(&["2015-10-28", "2015-10-30"], None, None));
    let s = load_series(&p, &grid()).unwrap().series;
    let gz = dir.path().join("g.csv.gz");
    write_series_csv(&gz, &s).unwrap();
    let mut raw = Vec::new();
    std::io::Read::read_to_end(&mut std::fs::File::open(&gz).unwrap(), &mut raw).unwrap();
    assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    let back = load_series(&gz, &grid()).unwrap().series;
    assert_eq!(back.days, s.days);

    let f = load_frame(&gz, &grid(), date("2015-10-30"), 84).unwrap();
    assert_eq!(f.values, s.days[1].frames[84].values);
    assert!(load_frame(&gz, &grid(), date("2015-11-30"), 84).is_err());
}

#[test]
fn crlf_and_whitespace_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = std::fs::File::create(dir.path().join("w.csv")).unwrap();
    let body = csv_for(&["2015-10-28"], None, None).replace('\n', "\r\n");
    f.write_all(body.as_bytes()).unwrap();
    drop(f);
    assert_eq!(load_series(&dir.path().join("w.csv"), &grid()).unwrap().series.days.len(), 1);
}

fn series_from(values: &[f64], n_days: usize) -> GridSeries {
    let g = grid();
    let n = g.n_cells();
    let days = (0..n_days)
        .map(|i| {
            let d = date("2016-06-01") + chrono::Days::new(i as u64);
            DayRecord {
                date: d,
                frames: (0..QUARTERS_PER_DAY)
                    .map(|q| GridFrame {
                        date: d,
                        quarter: q as u8,
                        values: Array2::from_shape_fn((g.n_rows, g.n_cols), |(r, c)| {
                            values[(i * QUARTERS_PER_DAY * n + q * n + r * g.n_cols + c) % values.len()]
                        }),
                    })
                    .collect(),
            }
        })
        .collect();
    GridSeries::new(g, days, SeriesMetadata::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn standardize_hits_both_bounds(vals in prop::collection::vec(0.0f64..1e4, 7..200)) {
        let z = standardize(&series_from(&vals, 2), StandardizeScope::Global).unwrap();
        let all: Vec<f64> = z.iter().flat_map(|d| d.frames.iter().flat_map(|f| f.iter().copied())).collect();
        let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if vals.iter().any(|v| *v != vals[0]) {
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 100.0);
        } else {
            prop_assert!(all.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn standardize_monotone_same_range(vals in prop::collection::vec(1.0f64..1e3, 10..100), pick in 0usize..1000) {
        // X2 >= X1 elementwise with identical global min and max.
        let mut v2 = vals.clone();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let i = pick % v2.len();
        v2[i] = (v2[i] + 0.5 * (hi - v2[i])).min(hi);
        let mut a = vals.clone(); a.push(lo); a.push(hi);
        let mut b = v2.clone(); b.push(lo); b.push(hi);
        let z1 = standardize(&series_from(&a, 1), StandardizeScope::Global).unwrap();
        let z2 = standardize(&series_from(&b, 1), StandardizeScope::Global).unwrap();
        for (f1, f2) in z1[0].frames.iter().zip(&z2[0].frames) {
            for (x1, x2) in f1.iter().zip(f2.iter()) {
                prop_assert!(x1 <= x2);
            }
        }
    }

    #[test]
    fn standardize_idempotent_under_affine(vals in prop::collection::vec(0.0f64..1e4, 10..120), a in 0.01f64..1e3, b in 0.0f64..1e3) {
        let s = series_from(&vals, 1);
        let z = standardize(&s, StandardizeScope::Global).unwrap();
        let mut back = s.clone();
        for (d, zd) in back.days.iter_mut().zip(&z) {
            for (f, zf) in d.frames.iter_mut().zip(&zd.frames) {
                f.values = zf.mapv(|v| a * v + b);
            }
        }
        let z2 = standardize(&back, StandardizeScope::Global).unwrap();
        for (d1, d2) in z.iter().zip(&z2) {
            for (f1, f2) in d1.frames.iter().zip(&d2.frames) {
                for (x, y) in f1.iter().zip(f2.iter()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ddp_additive_over_split(vals in prop::collection::vec(0u32..5000, 12..200), split in 1usize..4) {
        let fv: Vec<f64> = vals.iter().map(|v| *v as f64).collect();
        let s = series_from(&fv, 2);
        let whole = compute_ddp(&s, &CellRange { row_start: 0, row_end: 3, col_start: 0, col_end: 4 }).unwrap();
        let left = compute_ddp(&s, &CellRange { row_start: 0, row_end: 3, col_start: 0, col_end: split }).unwrap();
        let right = compute_ddp(&s, &CellRange { row_start: 0, row_end: 3, col_start: split, col_end: 4 }).unwrap();
        for ((w, l), r) in whole.iter().zip(&left).zip(&right) {
            for q in 0..QUARTERS_PER_DAY {
                prop_assert_eq!(w.values[q], l.values[q] + r.values[q]);
            }
        }
    }
}
