//! Plain-text dataset bundles and converters from common raw layouts.
//!
//! A bundle is a directory with three files:
//!
//! * `nodes.tsv`: `id<TAB>label<TAB>f_1 f_2 ... f_d`, one node per line,
//!   features separated by single spaces;
//! * `edges.tsv`: `src<TAB>dst`, one edge per line, each undirected edge
//!   listed once or in both directions;
//! * `meta.json`: `{"name", "num_nodes", "feature_dim", "num_classes"}`.
//!
//! Node ids are arbitrary strings; they are numbered in the order they appear
//! in `nodes.tsv`. [`write_bundle`] always writes ids `0..n`, each edge once
//! with `src < dst`, and floats in shortest round-trip form, so writing is
//! deterministic and loading what was written reproduces the graph exactly.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeCleanup, Graph};
use crate::tensor::Matrix;
use crate::Scalar;

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const META_FILE: &str = "meta.json";

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
}

/// A loaded dataset.
#[derive(Debug, Clone)]
pub struct DatasetBundle<T> {
    pub name: String,
    pub graph: Graph<T>,
    /// Where the data came from (directory or converter input).
    pub provenance: String,
    /// Self-loops and repeated edges dropped while loading.
    pub cleanup: EdgeCleanup,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Divide each feature row by its L1 norm (all-zero rows are left alone).
    pub row_normalize: bool,
}

/// Raw layouts understood by [`convert_external`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalFormat {
    /// `<name>.content` (`id f_1 .. f_d label`) and `<name>.cites` (`cited citing`).
    PlanetoidText,
    /// `out1_node_feature_label.txt` (`id<TAB>f_1,..,f_d<TAB>label`) and
    /// `out1_graph_edges.txt` (`src<TAB>dst`), each with a header line.
    WebkbText,
}

impl std::str::FromStr for ExternalFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planetoid-text" => Ok(Self::PlanetoidText),
            "webkb-text" => Ok(Self::WebkbText),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_float(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad number `{tok}`")))
}

/// Reads a bundle directory.
pub fn load_dataset<T: Scalar>(dir: &Path, opts: &LoadOptions) -> Result<DatasetBundle<T>> {
    let meta_path = dir.join(META_FILE);
    let nodes_path = dir.join(NODES_FILE);
    let edges_path = dir.join(EDGES_FILE);
    let meta: Meta = serde_json::from_str(&read(&meta_path)?)?;
    let nodes_text = read(&nodes_path)?;
    let edges_text = read(&edges_path)?;

    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(meta.num_nodes);
    let mut data = Vec::with_capacity(meta.num_nodes * meta.feature_dim);
    for (k, line) in nodes_text.lines().enumerate() {
        let lineno = k + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let id = fields.next().unwrap_or_default();
        let label_tok = fields
            .next()
            .ok_or_else(|| parse_err(&nodes_path, lineno, "expected id<TAB>label<TAB>features"))?;
        let feats = fields.next().unwrap_or("");
        let label: usize = label_tok
            .parse()
            .map_err(|_| parse_err(&nodes_path, lineno, format!("bad label `{label_tok}`")))?;
        if label >= meta.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: meta.num_classes,
            });
        }
        if ids.insert(id, labels.len()).is_some() {
            return Err(parse_err(&nodes_path, lineno, format!("duplicate node id `{id}`")));
        }
        let before = data.len();
        for tok in feats.split(' ').filter(|t| !t.is_empty()) {
            data.push(T::lit(parse_float(&nodes_path, lineno, tok)?));
        }
        let width = data.len() - before;
        if width != meta.feature_dim {
            return Err(parse_err(
                &nodes_path,
                lineno,
                format!("{width} features, meta.json declares {}", meta.feature_dim),
            ));
        }
        labels.push(label);
    }
    if labels.len() != meta.num_nodes {
        return Err(parse_err(
            &nodes_path,
            0,
            format!("{} nodes, meta.json declares {}", labels.len(), meta.num_nodes),
        ));
    }

    let mut edges = Vec::new();
    for (k, line) in edges_text.lines().enumerate() {
        let lineno = k + 1;
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&edges_path, lineno, "expected src<TAB>dst"))?;
        let lookup = |id: &str| {
            ids.get(id)
                .copied()
                .ok_or_else(|| parse_err(&edges_path, lineno, format!("unknown node id `{id}`")))
        };
        edges.push((lookup(a)?, lookup(b)?));
    }

    let mut features = Matrix::from_vec(meta.num_nodes, meta.feature_dim, data)?;
    if opts.row_normalize {
        row_normalize(&mut features);
    }
    let (graph, cleanup) = Graph::from_edges(features, labels, meta.num_classes, edges)?;
    if cleanup != EdgeCleanup::default() {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            dir.display(),
            cleanup.self_loops,
            cleanup.duplicates
        );
    }
    Ok(DatasetBundle {
        name: meta.name,
        graph,
        provenance: dir.display().to_string(),
        cleanup,
    })
}

/// L1 row normalisation in place; all-zero rows stay zero.
pub fn row_normalize<T: Scalar>(m: &mut Matrix<T>) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let norm: T = row.iter().map(|v| v.abs()).sum();
        if norm > T::zero() {
            row.iter_mut().for_each(|v| *v = *v / norm);
        }
    }
}

/// Renders the three bundle files as strings.
pub fn render_bundle<T: Scalar>(name: &str, graph: &Graph<T>) -> Result<(String, String, String)> {
    let mut nodes = String::new();
    let features = graph.features();
    for (i, &label) in graph.labels().iter().enumerate() {
        write!(nodes, "{i}\t{label}\t").unwrap();
        for (j, v) in features.row(i).iter().enumerate() {
            if j > 0 {
                nodes.push(' ');
            }
            write!(nodes, "{}", v.as_f64()).unwrap();
        }
        nodes.push('\n');
    }
    let mut edges = String::new();
    for (a, b) in graph.edges() {
        writeln!(edges, "{a}\t{b}").unwrap();
    }
    let meta = Meta {
        name: name.to_string(),
        num_nodes: graph.num_nodes(),
        feature_dim: graph.feature_dim(),
        num_classes: graph.num_classes(),
    };
    let mut meta_json = serde_json::to_string_pretty(&meta)?;
    meta_json.push('\n');
    Ok((nodes, edges, meta_json))
}

/// Writes `graph` as a bundle into `dir` (created if needed).
pub fn write_bundle<T: Scalar>(dir: &Path, name: &str, graph: &Graph<T>) -> Result<()> {
    let (nodes, edges, meta) = render_bundle(name, graph)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(NODES_FILE), nodes)?;
    fs::write(dir.join(EDGES_FILE), edges)?;
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

/// Converts a raw dataset directory into a bundle written to `out_dir` and
/// returns the converted data.
pub fn convert_external(raw_dir: &Path, format: ExternalFormat, out_dir: &Path) -> Result<DatasetBundle<f64>> {
    let bundle = match format {
        ExternalFormat::PlanetoidText => read_planetoid(raw_dir)?,
        ExternalFormat::WebkbText => read_webkb(raw_dir)?,
    };
    write_bundle(out_dir, &bundle.name, &bundle.graph)?;
    Ok(bundle)
}

fn find_one_with_extension(dir: &Path, ext: &str) -> Result<PathBuf> {
    let mut found: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    found.sort();
    match found.len() {
        0 => Err(Error::MissingFile(dir.join(format!("*.{ext}")))),
        1 => Ok(found.pop().unwrap()),
        _ => Err(Error::InvalidArgument(format!(
            "{} contains several .{ext} files",
            dir.display()
        ))),
    }
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_else(|| "dataset".into())
}

fn read_planetoid(dir: &Path) -> Result<DatasetBundle<f64>> {
    let content_path = find_one_with_extension(dir, "content")?;
    let cites_path = find_one_with_extension(dir, "cites")?;
    let name = content_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_else(|| dir_name(dir));
    let content = read(&content_path)?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in content.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 2 {
            return Err(parse_err(&content_path, k + 1, "expected id, features, label"));
        }
        let feats = toks[1..toks.len() - 1]
            .iter()
            .map(|t| parse_float(&content_path, k + 1, t))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(parse_err(
                    &content_path,
                    k + 1,
                    format!("{} features, expected {}", feats.len(), first.len()),
                ));
            }
        }
        if ids.insert(toks[0].to_string(), rows.len()).is_some() {
            return Err(parse_err(&content_path, k + 1, format!("duplicate id `{}`", toks[0])));
        }
        rows.push(feats);
        raw_labels.push(toks[toks.len() - 1].to_string());
    }
    let classes: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    let class_index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_index[l.as_str()]).collect();

    let cites = read(&cites_path)?;
    let mut edges = Vec::new();
    let mut dangling = 0usize;
    for (k, line) in cites.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(parse_err(&cites_path, k + 1, "expected two ids"));
        }
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            // some public citation dumps cite papers that have no content row
            _ => dangling += 1,
        }
    }
    if dangling > 0 {
        log::warn!("{}: skipped {dangling} citations to unknown papers", cites_path.display());
    }
    build_converted(name, dir, rows, labels, classes.len(), edges)
}

fn read_webkb(dir: &Path) -> Result<DatasetBundle<f64>> {
    let nodes_path = dir.join("out1_node_feature_label.txt");
    let edges_path = dir.join("out1_graph_edges.txt");
    let nodes = read(&nodes_path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut ids = HashMap::new();
    for (k, line) in nodes.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(parse_err(&nodes_path, k + 1, "expected id<TAB>features<TAB>label"));
        }
        let feats = f[1]
            .split(',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_float(&nodes_path, k + 1, t))
            .collect::<Result<Vec<_>>>()?;
        let label: usize = f[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(&nodes_path, k + 1, format!("bad label `{}`", f[2])))?;
        if ids.insert(f[0].trim().to_string(), rows.len()).is_some() {
            return Err(parse_err(&nodes_path, k + 1, format!("duplicate id `{}`", f[0])));
        }
        rows.push(feats);
        labels.push(label);
    }
    // the actor co-occurrence graph stores features as lists of active indices
    let ragged = rows.iter().any(|r| r.len() != rows.first().map_or(0, Vec::len));
    if ragged {
        let dim = rows
            .iter()
            .flatten()
            .map(|&v| v as usize + 1)
            .max()
            .unwrap_or(0);
        for row in rows.iter_mut() {
            let mut dense = vec![0.0; dim];
            for &v in row.iter() {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "{}: ragged feature rows must hold non-negative integer indices",
                        nodes_path.display()
                    )));
                }
                dense[v as usize] = 1.0;
            }
            *row = dense;
        }
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);

    let edges_text = read(&edges_path)?;
    let mut edges = Vec::new();
    for (k, line) in edges_text.lines().enumerate().skip(1) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(parse_err(&edges_path, k + 1, "expected src<TAB>dst"));
        }
        let look = |t: &str| {
            ids.get(t)
                .copied()
                .ok_or_else(|| parse_err(&edges_path, k + 1, format!("unknown node id `{t}`")))
        };
        edges.push((look(toks[0])?, look(toks[1])?));
    }
    build_converted(dir_name(dir), dir, rows, labels, num_classes, edges)
}

fn build_converted(
    name: String,
    dir: &Path,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
) -> Result<DatasetBundle<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let features = Matrix::from_vec(n, d, rows.into_iter().flatten().collect())?;
    let (graph, cleanup) = Graph::from_edges(features, labels, num_classes, edges)?;
    Ok(DatasetBundle {
        name,
        graph,
        provenance: dir.display().to_string(),
        cleanup,
    })
}
