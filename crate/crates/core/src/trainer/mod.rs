//! Full-batch training with Adam, early stopping on the validation split,
//! λ selection and multi-split evaluation.

mod adam;
mod config;

use std::time::Instant;

use serde::Serialize;

pub use adam::{adam_step, Adam, AdamState};
pub use config::{ModelConfig, StopMetric, LAMBDA_GRID};

use crate::autodiff::Reduction;
use crate::error::{Error, Result};
use crate::graph::{Graph, Split, SplitMasks};
use crate::layers::{drop_edges, GraphOps, Model, Session, Wrapper};
use crate::losses::{accuracy, decoupling_loss, final_loss, semi_supervised_loss};
use crate::tensor::Matrix;
use crate::{seeded_rng, Rng, RngStream, Scalar};

/// Outcome of one training run on one split. Equality ignores `wall_time`.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Unweighted decoupling loss of the restored model in eval mode (MMP only).
    pub decouple_loss: Option<f64>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl PartialEq for RunResult {
    fn eq(&self, other: &Self) -> bool {
        self.test_accuracy == other.test_accuracy
            && self.best_val_accuracy == other.best_val_accuracy
            && self.best_epoch == other.best_epoch
            && self.epochs_run == other.epochs_run
            && self.lambda == other.lambda
            && self.seed == other.seed
            && self.decouple_loss == other.decouple_loss
    }
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    // second pass removes the rounding left by the first
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate over the splits of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub mean_test: f64,
    pub stdev_test: f64,
    pub mean_val: f64,
    pub runs: Vec<RunResult>,
}

impl SplitSummary {
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let test: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
        let val: Vec<f64> = runs.iter().map(|r| r.best_val_accuracy).collect();
        let (mean_test, stdev_test) = mean_stdev(&test);
        Self {
            mean_test,
            stdev_test,
            mean_val: mean_stdev(&val).0,
            runs,
        }
    }
}

/// Evaluates `model` in eval mode; returns the logits.
pub fn predict<T: Scalar>(model: &Model<T>, ops: &GraphOps<T>, graph: &Graph<T>) -> Result<Matrix<T>> {
    Ok(eval_pass(model, ops, graph, false)?.0)
}

// eval mode never draws from the generator, so a throwaway one is fine
fn eval_pass<T: Scalar>(
    model: &Model<T>,
    ops: &GraphOps<T>,
    graph: &Graph<T>,
    include_layer0: bool,
) -> Result<(Matrix<T>, Option<f64>)> {
    let mut rng = seeded_rng(0, RngStream::Training);
    let mut sess = Session::new(model.params(), false, &mut rng);
    let x = sess.tape.constant_shared(graph.shared_features());
    let out = model.forward(&mut sess, ops, x)?;
    let decouple = if out.states.iter().any(|s| s.memory.is_some()) {
        let d = decoupling_loss(&mut sess.tape, &out.states, include_layer0)?;
        Some(sess.tape.scalar(d)?.as_f64())
    } else {
        None
    };
    Ok((sess.tape.value(out.logits).clone(), decouple))
}

fn validation_loss<T: Scalar>(logits: &Matrix<T>, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let mut tape = crate::autodiff::Tape::new();
    let z = tape.constant(logits.clone());
    let l = tape.softmax_cross_entropy(z, labels, mask, Reduction::Mean)?;
    Ok(tape.scalar(l)?.as_f64())
}

/// Trains a fresh model on `split` and reports its test accuracy at the best
/// validation epoch.
///
/// Each epoch runs a training-mode forward pass, the objective
/// `L_semi (+ λ·L_decouple for MMP)`, backward, one Adam step and an
/// eval-mode validation pass. Training stops once `patience` consecutive
/// epochs fail to improve the validation metric; the best epoch's
/// parameters are restored before the test set is scored.
///
/// All randomness (initialisation, dropout masks, dropped edges) comes from
/// one generator seeded with `config.seed`, so runs are bit-reproducible.
pub fn train_once<T: Scalar>(graph: &Graph<T>, split: &Split, config: &ModelConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let n = graph.num_nodes();
    let labels = graph.labels();
    let SplitMasks { train, val, test } = split.masks(n);
    if !train.iter().any(|&b| b) || !val.iter().any(|&b| b) || !test.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }

    let mut rng: Rng = seeded_rng(config.seed, RngStream::Training);
    let mut model = Model::new(config.model_options(), graph.feature_dim(), graph.num_classes(), &mut rng)?;
    let mut adam = Adam::new(config.lr, config.weight_decay, model.params().values());
    let full_ops = GraphOps::for_conv(graph, config.conv);
    let features = graph.shared_features();
    let uses_decoupling = config.wrapper == Wrapper::Mmp && config.lambda > 0.0;

    let mut best_score = f64::NEG_INFINITY;
    let mut best_val_acc = 0.0;
    let mut best_epoch = 0;
    let mut best_params = model.params().values().to_vec();
    let mut since_best = 0usize;
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        let epoch_ops = if config.wrapper == Wrapper::DropEdge {
            let view = drop_edges(graph, config.dropedge_p, &mut rng)?;
            Some(GraphOps::for_conv(&view, config.conv))
        } else {
            None
        };
        let ops = epoch_ops.as_ref().unwrap_or(&full_ops);

        let grads = {
            let mut sess = Session::new(model.params(), true, &mut rng);
            let x = sess.tape.constant_shared(features.clone());
            let out = model.forward(&mut sess, ops, x)?;
            let semi = semi_supervised_loss(&mut sess.tape, out.logits, labels, &train, config.reduction)?;
            let loss = if uses_decoupling {
                let dec = decoupling_loss(&mut sess.tape, &out.states, config.include_layer0_decouple)?;
                final_loss(&mut sess.tape, semi, dec, config.lambda)?
            } else {
                semi
            };
            let value = sess.tape.scalar(loss)?.as_f64();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, value });
            }
            sess.tape.backward(loss)?;
            sess.param_grads(model.params())
        };
        adam.step(model.params_mut().values_mut(), &grads)?;

        let logits = predict(&model, &full_ops, graph)?;
        let val_acc = accuracy(&logits, labels, &val)?;
        let score = match config.stop_metric {
            StopMetric::Accuracy => val_acc,
            StopMetric::Loss => -validation_loss(&logits, labels, &val)?,
        };
        if score > best_score {
            best_score = score;
            best_val_acc = val_acc;
            best_epoch = epoch;
            best_params.clone_from_slice(model.params().values());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }

    model.params_mut().values_mut().clone_from_slice(&best_params);
    let (logits, decouple) = eval_pass(&model, &full_ops, graph, config.include_layer0_decouple)?;
    let decouple_loss = decouple.filter(|_| config.wrapper == Wrapper::Mmp);
    let test_accuracy = accuracy(&logits, labels, &test)?;
    log::debug!(
        "{} seed {} λ {}: best epoch {best_epoch}/{epochs_run}, val {best_val_acc:.4}, test {test_accuracy:.4}",
        config.label(),
        config.seed,
        config.lambda
    );
    Ok(RunResult {
        test_accuracy,
        best_val_accuracy: best_val_acc,
        best_epoch,
        epochs_run,
        lambda: config.lambda,
        seed: config.seed,
        decouple_loss,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// One independent training job.
pub struct RunSpec<'a, T> {
    pub graph: &'a Graph<T>,
    pub split: &'a Split,
    pub config: ModelConfig,
}

/// Runs independent jobs on up to `jobs` threads; results come back in input order.
pub fn run_all<T: Scalar>(specs: &[RunSpec<'_, T>], jobs: usize) -> Result<Vec<RunResult>> {
    if jobs <= 1 || specs.len() <= 1 {
        return specs.iter().map(|s| train_once(s.graph, s.split, &s.config)).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        specs
            .par_iter()
            .map(|s| train_once(s.graph, s.split, &s.config))
            .collect()
    })
}

/// Seed used for split `k`: `base + k`.
pub fn split_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

/// Trains once per split (seed `config.seed + k` for split `k`) and aggregates.
pub fn evaluate_splits<T: Scalar>(
    graph: &Graph<T>,
    splits: &[Split],
    config: &ModelConfig,
    jobs: usize,
) -> Result<SplitSummary> {
    let specs: Vec<_> = splits
        .iter()
        .enumerate()
        .map(|(k, split)| RunSpec {
            graph,
            split,
            config: ModelConfig {
                seed: split_seed(config.seed, k),
                ..config.clone()
            },
        })
        .collect();
    Ok(SplitSummary::from_runs(run_all(&specs, jobs)?))
}

/// Index of the best λ by mean validation score; ties go to the smaller λ.
pub fn pick_lambda(scores: &[(f64, f64)]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(lambda, score) in scores {
        best = match best {
            None => Some((lambda, score)),
            Some((bl, bs)) if score > bs || (score == bs && lambda < bl) => Some((lambda, score)),
            keep => keep,
        };
    }
    best.map(|(l, _)| l)
}

/// Evaluates every λ of `grid` on all splits.
pub fn lambda_search<T: Scalar>(
    graph: &Graph<T>,
    splits: &[Split],
    config: &ModelConfig,
    grid: &[f64],
    jobs: usize,
) -> Result<Vec<(f64, SplitSummary)>> {
    let configs: Vec<ModelConfig> = grid
        .iter()
        .map(|&lambda| ModelConfig {
            lambda,
            ..config.clone()
        })
        .collect();
    let specs: Vec<_> = configs
        .iter()
        .flat_map(|cfg| {
            splits.iter().enumerate().map(move |(k, split)| RunSpec {
                graph,
                split,
                config: ModelConfig {
                    seed: split_seed(cfg.seed, k),
                    ..cfg.clone()
                },
            })
        })
        .collect();
    let mut runs = run_all(&specs, jobs)?.into_iter();
    Ok(grid
        .iter()
        .map(|&lambda| {
            let chunk: Vec<RunResult> = runs.by_ref().take(splits.len()).collect();
            (lambda, SplitSummary::from_runs(chunk))
        })
        .collect())
}

/// λ from `grid` maximising mean validation accuracy over `splits`.
pub fn select_lambda<T: Scalar>(
    graph: &Graph<T>,
    splits: &[Split],
    config: &ModelConfig,
    grid: &[f64],
    jobs: usize,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty λ grid".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let results = lambda_search(graph, splits, config, grid, jobs)?;
    let scores: Vec<(f64, f64)> = results.iter().map(|(l, s)| (*l, s.mean_val)).collect();
    Ok(pick_lambda(&scores).expect("non-empty grid"))
}
