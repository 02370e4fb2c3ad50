#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use mmp_core::dataset::write_bundle;
use mmp_core::graph::Graph;
use mmp_core::synthetic::{contextual_sbm, SbmConfig};

pub fn mmp(args: &[&str], data_dir: &Path, cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmp"))
        .args(args)
        .env("MMP_DATA_DIR", data_dir)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a small synthetic bundle named `name` under `data_dir`.
pub fn synthetic_bundle(data_dir: &Path, name: &str, cfg: &SbmConfig) -> Graph<f64> {
    let g: Graph<f64> = contextual_sbm(cfg).unwrap();
    write_bundle(&data_dir.join(name), name, &g).unwrap();
    g
}

pub fn small() -> SbmConfig {
    SbmConfig {
        nodes_per_class: 10,
        num_classes: 3,
        feature_dim: 6,
        avg_degree: 3.0,
        homophily: 0.3,
        signal: 0.6,
        seed: 11,
    }
}

/// Flags that keep a 10-split run to a fraction of a second.
pub const FAST: &[&str] = &["--max-epochs", "15", "--hidden", "8", "--gat-heads", "2", "--jobs", "2"];

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}
