#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use cellshare::{Run, RunConfig};

pub fn demo_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json")
}

pub fn district(d: &str, buffer: f64) -> serde_json::Value {
    let ids: Vec<String> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|&(i, j)| (i, j) != (1, 1))
        .map(|(i, j)| format!("D{d}-{i}{j}"))
        .collect();
    serde_json::json!({ "name": format!("district {d}"), "zone_ids": ids, "buffer_m": buffer })
}

/// A small synthetic run: 2x2 districts on a 21x21 grid, a few days.
pub fn small_config(n_days: usize) -> serde_json::Value {
    serde_json::json!({
        "seed": 3,
        "synth": { "n_days": n_days, "q": 0.9, "layout": { "districts_per_side": 2, "margin_cells": 1, "belt_cells": 1 } },
        "hog": { "cell_px": 7 },
        "cluster": { "k_max": 4 },
        "linkage": { "regions": [district("00", 100.0), district("11", 100.0)] }
    })
}

pub fn write_config(dir: &Path, cfg: &serde_json::Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

pub fn run_for(cfg: &serde_json::Value, out: &Path) -> Run {
    let cfg: RunConfig = serde_json::from_value(cfg.clone()).unwrap();
    Run::new(cfg, PathBuf::new(), out.to_path_buf()).unwrap()
}

/// Relative path -> bytes for every file below `root`.
pub fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn copy_tree(from: &Path, to: &Path) {
    for (rel, bytes) in tree(from) {
        let p = to.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, bytes).unwrap();
    }
}
