use std::fs;
use std::path::{Path, PathBuf};

use mmp_core::dataset::{convert_external, load_dataset, write_bundle, ExternalFormat, LoadOptions};
use mmp_core::graph::{edge_homophily, Graph};
use mmp_core::synthetic::{contextual_sbm, SbmConfig};
use mmp_core::Error;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn load(dir: &Path) -> Graph<f64> {
    load_dataset(dir, &LoadOptions::default()).unwrap().graph
}

fn same_graph(a: &Graph<f64>, b: &Graph<f64>) -> bool {
    a.features() == b.features()
        && a.labels() == b.labels()
        && a.num_classes() == b.num_classes()
        && a.edges().eq(b.edges())
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    ["nodes.tsv", "edges.tsv", "meta.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn toy_fixture() {
    let bundle = load_dataset::<f64>(&fixture("toy"), &LoadOptions::default()).unwrap();
    assert_eq!(bundle.name, "toy");
    let g = &bundle.graph;
    assert_eq!((g.num_nodes(), g.feature_dim(), g.num_classes()), (3, 2, 2));
    // a→b and b→a are one undirected edge
    assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    assert_eq!(bundle.cleanup.duplicates, 0);
    assert_eq!(g.features().row(1), &[0.5, -2.0]);

    let norm = load_dataset::<f64>(&fixture("toy"), &LoadOptions { row_normalize: true }).unwrap();
    assert_eq!(norm.graph.features().row(1), &[0.2, -0.8]);
    assert_eq!(norm.graph.features().row(2), &[0.0, 1.0]);
}

#[test]
fn planetoid_conversion_matches_fixture() {
    let out = tempfile::tempdir().unwrap();
    let converted = convert_external(&fixture("tiny_raw"), ExternalFormat::PlanetoidText, out.path()).unwrap();
    assert_eq!(converted.graph.num_nodes(), 5);
    assert_eq!(files(out.path()), files(&fixture("tiny")));
    assert!(same_graph(&load(out.path()), &load(&fixture("tiny"))));
    assert!(same_graph(&load(out.path()), &converted.graph));
}

#[test]
fn webkb_conversion_matches_fixture() {
    let out = tempfile::tempdir().unwrap();
    let converted = convert_external(&fixture("texas_mini"), ExternalFormat::WebkbText, out.path()).unwrap();
    assert_eq!(converted.name, "texas_mini");
    assert_eq!(converted.graph.num_nodes(), 4);
    assert_eq!(files(out.path()), files(&fixture("texas_mini_bundle")));
    assert!((edge_homophily(&converted.graph).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn webkb_index_list_features() {
    let raw = tempfile::tempdir().unwrap();
    fs::write(
        raw.path().join("out1_node_feature_label.txt"),
        "node_id\tfeature\tlabel\n0\t0,4\t1\n1\t2\t0\n2\t1,2,3\t1\n",
    )
    .unwrap();
    fs::write(raw.path().join("out1_graph_edges.txt"), "node_id\tnode_id\n0\t2\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let b = convert_external(raw.path(), ExternalFormat::WebkbText, out.path()).unwrap();
    assert_eq!(b.graph.feature_dim(), 5);
    assert_eq!(b.graph.features().row(0), &[1.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(b.graph.features().row(2), &[0.0, 1.0, 1.0, 1.0, 0.0]);
}

#[test]
fn conversion_errors() {
    let out = tempfile::tempdir().unwrap();
    assert!(matches!("csv".parse::<ExternalFormat>(), Err(Error::UnknownFormat(_))));
    assert!(matches!(
        convert_external(&fixture("toy"), ExternalFormat::PlanetoidText, out.path()),
        Err(Error::MissingFile(_))
    ));
    let raw = tempfile::tempdir().unwrap();
    fs::write(raw.path().join("x.content"), "a 1 0 A\nb 1 B\n").unwrap();
    fs::write(raw.path().join("x.cites"), "a b\n").unwrap();
    assert!(matches!(
        convert_external(raw.path(), ExternalFormat::PlanetoidText, out.path()),
        Err(Error::Parse { line: 2, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn write_then_load_roundtrips(seed in any::<u64>(), per_class in 4usize..15, classes in 1usize..4, h in 0.0f64..1.0) {
        let g: Graph<f64> = contextual_sbm(&SbmConfig {
            nodes_per_class: per_class,
            num_classes: classes,
            feature_dim: 3,
            avg_degree: 1.0,
            homophily: if classes == 1 { 1.0 } else { h },
            signal: 0.5,
            seed,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), "synthetic", &g).unwrap();
        let first = load(dir.path());
        prop_assert!(same_graph(&g, &first));
        prop_assert!(same_graph(&first, &load(dir.path())));
        // writing what was loaded reproduces the files byte for byte
        let again = tempfile::tempdir().unwrap();
        write_bundle(again.path(), "synthetic", &first).unwrap();
        prop_assert_eq!(files(dir.path()), files(again.path()));
    }
}
