//! Undirected attributed graphs, GCN normalisation, homophily, stratified
//! splits and random edge injection.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;
use crate::{seeded_rng, RngStream, Scalar};

/// Node-attributed, labelled, undirected graph.
///
/// Adjacency is stored symmetrically in CSR form with sorted neighbour lists,
/// no self-loops and no duplicate edges. Features and labels sit behind `Arc`
/// so derived graphs (edge noise, dropped edges) share them.
#[derive(Debug, Clone)]
pub struct Graph<T> {
    features: Arc<Matrix<T>>,
    labels: Arc<Vec<usize>>,
    num_classes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

/// What [`Graph::from_edges`] discarded while cleaning the edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from an edge list in which each undirected edge may be
    /// listed once or in both directions. Self-loops and repeated edges are
    /// dropped and counted.
    pub fn from_edges(
        features: impl Into<Arc<Matrix<T>>>,
        labels: Vec<usize>,
        num_classes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Self, EdgeCleanup)> {
        let features = features.into();
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let mut cleanup = EdgeCleanup::default();
        // an undirected edge may be listed once per direction; anything beyond
        // that is a duplicate
        let mut directed = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                cleanup.self_loops += 1;
                continue;
            }
            directed.push((a, b));
        }
        directed.sort_unstable();
        let before = directed.len();
        directed.dedup();
        cleanup.duplicates = before - directed.len();

        let mut pairs: Vec<_> = directed.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let graph = Self::from_sorted_pairs(features, Arc::new(labels), num_classes, &pairs);
        Ok((graph, cleanup))
    }

    fn from_sorted_pairs(
        features: Arc<Matrix<T>>,
        labels: Arc<Vec<usize>>,
        num_classes: usize,
        pairs: &[(usize, usize)],
    ) -> Self {
        let n = features.rows();
        let mut degree = vec![0usize; n];
        for &(a, b) in pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + degree[i];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; row_ptr[n]];
        for &(a, b) in pairs {
            col_idx[next[a]] = b;
            next[a] += 1;
            col_idx[next[b]] = a;
            next[b] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        Self {
            features,
            labels,
            num_classes,
            row_ptr,
            col_idx,
        }
    }

    /// Same nodes, features and labels with a different (already clean) edge set.
    pub fn with_edges(&self, pairs: &[(usize, usize)]) -> Self {
        let mut pairs: Vec<_> = pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs.retain(|&(a, b)| a != b);
        Self::from_sorted_pairs(
            Arc::clone(&self.features),
            Arc::clone(&self.labels),
            self.num_classes,
            &pairs,
        )
    }

    /// Same structure with replaced features (e.g. after row normalisation).
    pub fn with_features(&self, features: Matrix<T>) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::Shape {
                op: "with_features",
                lhs: self.features.shape(),
                rhs: features.shape(),
            });
        }
        Ok(Self {
            features: Arc::new(features),
            ..self.clone()
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn shared_features(&self) -> Arc<Matrix<T>> {
        Arc::clone(&self.features)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Nodes grouped by class label, each group in ascending order.
    pub fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            groups[y].push(i);
        }
        groups
    }

    /// Checks the structural invariants: symmetric, sorted, loop-free and
    /// duplicate-free adjacency.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.num_nodes() {
            let nb = self.neighbors(i);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!("node {i}: unsorted or duplicate neighbours")));
            }
            for &j in nb {
                if j == i {
                    return Err(Error::InvalidArgument(format!("self-loop on node {i}")));
                }
                if !self.has_edge(j, i) {
                    return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has no reverse")));
                }
            }
        }
        Ok(())
    }
}

/// Symmetrically normalised adjacency with self-loops,
/// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency<T>(Arc<CsrMatrix<T>>);

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn matrix(&self) -> &Arc<CsrMatrix<T>> {
        &self.0
    }

    /// Wraps an arbitrary square matrix; intended for tests that need an
    /// identity or hand-built propagation matrix.
    pub fn from_matrix(m: CsrMatrix<T>) -> Self {
        Self(Arc::new(m))
    }
}

pub fn gcn_normalize<T: Scalar>(g: &Graph<T>) -> NormalizedAdjacency<T> {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
    let weight = |i: usize, j: usize| T::lit(1.0 / (deg[i] * deg[j]).sqrt());
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(2 * g.num_edges() + n);
    let mut values = Vec::with_capacity(2 * g.num_edges() + n);
    row_ptr.push(0);
    for i in 0..n {
        let mut self_done = false;
        for &j in g.neighbors(i) {
            if !self_done && j > i {
                col_idx.push(i);
                values.push(weight(i, i));
                self_done = true;
            }
            col_idx.push(j);
            values.push(weight(i, j));
        }
        if !self_done {
            col_idx.push(i);
            values.push(weight(i, i));
        }
        row_ptr.push(col_idx.len());
    }
    let m = CsrMatrix::from_raw(n, n, row_ptr, col_idx, values).expect("well-formed CSR from graph");
    NormalizedAdjacency(Arc::new(m))
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn edge_homophily<T: Scalar>(g: &Graph<T>) -> Result<f64> {
    let labels = g.labels();
    let (mut same, mut total) = (0usize, 0usize);
    for (i, j) in g.edges() {
        total += 1;
        if labels[i] == labels[j] {
            same += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    Ok(same as f64 / total as f64)
}

/// Node indices of one train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn masks(&self, n: usize) -> SplitMasks {
        let mask = |idx: &[usize]| {
            let mut m = vec![false; n];
            idx.iter().for_each(|&i| m[i] = true);
            m
        };
        SplitMasks {
            train: mask(&self.train),
            val: mask(&self.val),
            test: mask(&self.test),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub num_splits: usize,
    /// Train and validation fractions per class; the test set takes the rest.
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Classes smaller than this are rejected.
    pub min_class_size: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            num_splits: 10,
            train_fraction: 0.48,
            val_fraction: 0.32,
            min_class_size: 3,
            seed: 0,
        }
    }
}

/// Stratified random splits: per class, `round(train·n_c)` train nodes,
/// `round(val·n_c)` validation nodes, the remainder test.
pub fn generate_splits<T: Scalar>(g: &Graph<T>, cfg: &SplitConfig) -> Result<Vec<Split>> {
    let groups = g.nodes_by_class();
    for (class, members) in groups.iter().enumerate() {
        if !members.is_empty() && members.len() < cfg.min_class_size {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                needed: cfg.min_class_size,
            });
        }
    }
    let mut rng = seeded_rng(cfg.seed, RngStream::Splits);
    let mut splits = Vec::with_capacity(cfg.num_splits);
    for _ in 0..cfg.num_splits {
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for members in &groups {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            let (n_train, n_val) = class_split_sizes(shuffled.len(), cfg.train_fraction, cfg.val_fraction);
            split.train.extend_from_slice(&shuffled[..n_train]);
            split.val.extend_from_slice(&shuffled[n_train..n_train + n_val]);
            split.test.extend_from_slice(&shuffled[n_train + n_val..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        splits.push(split);
    }
    Ok(splits)
}

/// `(train, val)` counts for a class of `n` nodes; never exceeds `n`.
pub fn class_split_sizes(n: usize, train_fraction: f64, val_fraction: f64) -> (usize, usize) {
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let n_val = ((val_fraction * n as f64).round() as usize).min(n - n_train);
    (n_train, n_val)
}

/// Adds `ceil(ratio · |E|)` new undirected edges drawn uniformly from the
/// node pairs that are neither edges nor self-loops.
pub fn add_random_edges<T: Scalar>(g: &Graph<T>, ratio: f64, seed: u64) -> Result<Graph<T>> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("edge ratio {ratio} must be >= 0")));
    }
    let n = g.num_nodes();
    let existing = g.num_edges();
    let requested = (ratio * existing as f64).ceil() as usize;
    let capacity = n * n.saturating_sub(1) / 2;
    let available = capacity - existing;
    if requested > available {
        return Err(Error::NotEnoughNonEdges { requested, available });
    }
    if requested == 0 {
        return Ok(g.clone());
    }
    let mut rng = seeded_rng(seed, RngStream::Noise);
    let mut pairs: Vec<(usize, usize)> = g.edges().collect();

    if requested * 2 <= available {
        let mut taken: HashSet<(usize, usize)> = HashSet::with_capacity(requested * 2);
        while taken.len() < requested {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b {
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if g.has_edge(pair.0, pair.1) || !taken.insert(pair) {
                continue;
            }
            pairs.push(pair);
        }
    } else {
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !g.has_edge(i, j))
            .collect();
        let (chosen, _) = candidates.partial_shuffle(&mut rng, requested);
        pairs.extend_from_slice(chosen);
    }
    Ok(g.with_edges(&pairs))
}
