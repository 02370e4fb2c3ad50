//! Random labelled graphs with controllable homophily, for tests and smoke runs.

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Matrix;
use crate::{seeded_rng, RngStream, Scalar};

/// Contextual stochastic block model: each class has a random ±`signal`
/// mean vector, node features are that mean plus uniform noise in `[-1, 1]`,
/// and each sampled edge joins two nodes of the same class with probability
/// `homophily`.
#[derive(Debug, Clone)]
pub struct SbmConfig {
    pub nodes_per_class: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub avg_degree: f64,
    pub homophily: f64,
    pub signal: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes_per_class: 20,
            num_classes: 3,
            feature_dim: 8,
            avg_degree: 4.0,
            homophily: 0.5,
            signal: 0.5,
            seed: 0,
        }
    }
}

pub fn contextual_sbm<T: Scalar>(cfg: &SbmConfig) -> Result<Graph<T>> {
    let c = cfg.num_classes;
    let n = cfg.nodes_per_class * c;
    if c == 0 || cfg.nodes_per_class < 2 || cfg.feature_dim == 0 {
        return Err(Error::InvalidArgument("SBM needs ≥ 1 class, ≥ 2 nodes per class and features".into()));
    }
    if !(0.0..=1.0).contains(&cfg.homophily) || (c == 1 && cfg.homophily < 1.0) {
        return Err(Error::InvalidArgument(format!("homophily {} not attainable", cfg.homophily)));
    }
    let mut rng = seeded_rng(cfg.seed, RngStream::Synthetic);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let means: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            (0..cfg.feature_dim)
                .map(|_| if rng.gen::<bool>() { cfg.signal } else { -cfg.signal })
                .collect()
        })
        .collect();
    let mut features = Matrix::zeros(n, cfg.feature_dim);
    for i in 0..n {
        for (j, &mu) in means[labels[i]].iter().enumerate() {
            features[(i, j)] = T::lit(mu + rng.gen_range(-1.0..=1.0));
        }
    }

    let target = ((n as f64 * cfg.avg_degree) / 2.0).round() as usize;
    let max_edges = n * (n - 1) / 2;
    if target > max_edges / 2 {
        return Err(Error::InvalidArgument(format!("average degree {} too dense", cfg.avg_degree)));
    }
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target {
        attempts += 1;
        if attempts > 100 * target + 1000 {
            return Err(Error::InvalidArgument(
                "could not place the requested edges; lower the degree or homophily".into(),
            ));
        }
        let a = rng.gen_range(0..n);
        let b = if rng.gen::<f64>() < cfg.homophily {
            labels[a] + c * rng.gen_range(0..cfg.nodes_per_class)
        } else {
            let other = (labels[a] + rng.gen_range(1..c)) % c;
            other + c * rng.gen_range(0..cfg.nodes_per_class)
        };
        if a != b && seen.insert((a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    Ok(Graph::from_edges(features, labels, c, edges)?.0)
}
