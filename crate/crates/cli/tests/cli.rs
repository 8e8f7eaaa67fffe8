mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use cellshare::artifacts::{read_json, read_ratios, Manifest};
use cellshare::error::ErrorReport;
use common::*;

fn cellshare(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellshare"))
        .args(args)
        .current_dir(dir)
        .env_remove("CELLSHARE_SEED")
        .env_remove("CELLSHARE_OUT")
        .env_remove("CELLSHARE_CONFIG")
        .output()
        .unwrap()
}

fn error_of(o: &Output) -> ErrorReport {
    let line = String::from_utf8_lossy(&o.stderr);
    let last = line.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("stderr is not an error report: {line}"))
}

#[test]
fn pipeline_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config(8));
    let o = cellshare(&["--config", "config.json", "--out", "run", "pipeline", "--plot"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("run");
    for f in [
        "config.json",
        "synth/grid.csv.gz",
        "synth/zones.geojson",
        "synth/ground_truth.json",
        "ingest/dataset.json",
        "ingest/ddp.csv",
        "features/features.csv",
        "features/layout.json",
        "cluster/assignments.csv",
        "cluster/report.json",
        "fboxplot/index.json",
        "linkage/ratios.csv",
        "linkage/zones_ratio.geojson",
        "linkage/summary.json",
        "linkage/market_share.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let svgs = fs::read_dir(out.join("fboxplot/groups")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")
    });
    assert!(svgs.count() >= 1);
    let header = fs::read_to_string(out.join("cluster/assignments.csv")).unwrap();
    assert!(header.starts_with("date,kmeans_cluster,functional_subgroup\n"));
    let header = fs::read_to_string(out.join("linkage/ratios.csv")).unwrap();
    assert!(header.starts_with("zone_id,tim_users,residents_filtered,ratio\n"));

    // Every manifest digest matches the file it names.
    for stage in ["synth", "ingest", "features", "cluster", "fboxplot", "linkage"] {
        let m: Manifest = read_json(&out.join(format!("{stage}/manifest.json"))).unwrap();
        assert_eq!(m.stage, stage);
        assert_eq!(m.seed, 3);
        assert!(!m.outputs.is_empty());
        for d in m.inputs.iter().chain(&m.outputs) {
            assert!(!Path::new(&d.path).is_absolute());
            assert_eq!(cellshare::artifacts::sha256_file(&out.join(&d.path)).unwrap(), d.sha256, "{}", d.path);
        }
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 6);
}

#[test]
fn stage_before_its_predecessor_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config(4));
    let o = cellshare(&["--config", "config.json", "--out", "run", "cluster"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let e = error_of(&o);
    assert_eq!(e.code, "dependency");
    assert!(e.message.contains("features/features.csv"), "{}", e.message);

    let o = cellshare(&["--config", "config.json", "--out", "run", "ingest"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(error_of(&o).message.contains("synth/"));
    let o = cellshare(&["--config", "config.json", "--out", "run", "serve", "--bind", "127.0.0.1:0"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn invalid_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(4);
    cfg["inputs"] = serde_json::json!({
        "grid_csv": "g.csv", "zones_geojson": "z.geojson",
        "grid": { "origin": { "x": 0.0, "y": 0.0 }, "cell_size": 150.0, "n_rows": 3, "n_cols": 3 },
        "geo_origin": { "lon": 9.0, "lat": 45.0 }
    });
    write_config(dir.path(), &cfg);
    let o = cellshare(&["--config", "config.json", "synth"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o).code, "config");

    fs::write(dir.path().join("config.json"), "{\"seed\": 1, \"bogus\": true}").unwrap();
    let o = cellshare(&["--config", "config.json", "synth"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(error_of(&o).message.contains("bogus"));

    let o = cellshare(&["--config", "missing.json", "synth"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_of(&o).code, "io");
}

#[test]
fn seed_flag_and_environment_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config(2));
    let o = cellshare(&["--config", "config.json", "--out", "a", "--seed", "11", "synth"], dir.path());
    assert!(o.status.success());
    let m: Manifest = read_json(&dir.path().join("a/synth/manifest.json")).unwrap();
    assert_eq!(m.seed, 11);

    let o = Command::new(env!("CARGO_BIN_EXE_cellshare"))
        .args(["synth"])
        .current_dir(dir.path())
        .env("CELLSHARE_CONFIG", "config.json")
        .env("CELLSHARE_OUT", "b")
        .env("CELLSHARE_SEED", "11")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    let c = cellshare(&["--config", "config.json", "--out", "c", "synth"], dir.path());
    assert!(c.status.success());
    let mc: Manifest = read_json(&dir.path().join("c/synth/manifest.json")).unwrap();
    assert_eq!(mc.seed, 3);
    assert_ne!(mc.outputs, m.outputs);
}

#[test]
fn observed_inputs_link_like_the_synthetic_source() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config(3));
    let o = cellshare(&["--config", "config.json", "--out", "syn", "synth"], dir.path());
    assert!(o.status.success());
    for stage in ["ingest", "linkage"] {
        assert!(cellshare(&["--config", "config.json", "--out", "syn", stage], dir.path()).status.success());
    }
    let truth: serde_json::Value = read_json(&dir.path().join("syn/synth/ground_truth.json")).unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    fs::copy(dir.path().join("syn/synth/grid.csv.gz"), data.join("grid.csv.gz")).unwrap();
    fs::copy(dir.path().join("syn/synth/zones.geojson"), data.join("zones.geojson")).unwrap();

    let mut cfg = small_config(3);
    cfg.as_object_mut().unwrap().remove("synth");
    cfg["inputs"] = serde_json::json!({
        "grid_csv": "data/grid.csv.gz",
        "zones_geojson": "data/zones.geojson",
        "grid": truth["grid"],
        "geo_origin": truth["geo_origin"],
    });
    fs::write(dir.path().join("observed.json"), serde_json::to_vec(&cfg).unwrap()).unwrap();
    for stage in ["ingest", "linkage"] {
        let o = cellshare(&["--config", "observed.json", "--out", "obs", stage], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = read_ratios(&dir.path().join("syn/linkage/ratios.csv")).unwrap();
    let b = read_ratios(&dir.path().join("obs/linkage/ratios.csv")).unwrap();
    assert_eq!(a, b);
    let m: Manifest = read_json(&dir.path().join("obs/ingest/manifest.json")).unwrap();
    assert_eq!(m.inputs[0].path, "data/grid.csv.gz");
}

#[test]
fn serve_answers_over_http() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config(6));
    assert!(cellshare(&["--config", "config.json", "--out", "run", "pipeline"], dir.path()).status.success());
    let mut child = Command::new(env!("CARGO_BIN_EXE_cellshare"))
        .args(["--config", "config.json", "--out", "run", "serve", "--bind", "127.0.0.1:0"])
        .current_dir(dir.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    let addr = v["addr"].as_str().unwrap().to_string();

    let get = |path: &str| {
        let mut s = TcpStream::connect(&addr).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut resp = String::new();
        s.read_to_string(&mut resp).unwrap();
        resp
    };
    let summary = get("/api/summary");
    let disk = fs::read_to_string(dir.path().join("run/linkage/summary.json")).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(summary.starts_with("HTTP/1.1 200"), "{summary}");
    assert!(summary.ends_with(&disk));
}
