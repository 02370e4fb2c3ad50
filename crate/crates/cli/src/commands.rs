use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mmp_core::dataset::{convert_external, load_dataset, DatasetBundle, ExternalFormat, LoadOptions};
use mmp_core::graph::{add_random_edges, edge_homophily, generate_splits, Graph, Split, SplitConfig};
use mmp_core::layers::{ConvKind, Wrapper};
use mmp_core::trainer::{
    mean_stdev, pick_lambda, run_all, split_seed, ModelConfig, RunSpec, SplitSummary, LAMBDA_GRID,
};

use crate::args::*;
use crate::output::{csv_bytes, plotdata, write_atomic};

/// Failure of a command, split by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown dataset or model: exit code 2.
    Usage(anyhow::Error),
    /// Anything that went wrong while loading or training: exit code 1.
    Run(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl From<mmp_core::Error> for CliError {
    fn from(e: mmp_core::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Run(e) => write!(f, "{e:#}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(anyhow!("{msg}"))
}

pub fn run(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Classify(a) => classify(a, out),
        Command::Noise(a) => noise(a, out),
        Command::LambdaSweep(a) => lambda_sweep(a, out),
        Command::Homophily(a) => homophily(a, out),
        Command::Convert(a) => convert(a, out),
        Command::Plotdata(a) => {
            let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let table = plotdata(&text)?;
            match &a.out {
                Some(p) => write_atomic(p, table.as_bytes())?,
                None => out.write_all(table.as_bytes())?,
            }
            Ok(())
        }
    }
}

/// Parses labels such as `gcn`, `gat+mmp`, `gcn+dropedge` or `mlp`.
pub fn parse_model(label: &str) -> Option<(ConvKind, Wrapper)> {
    let (conv, wrapper) = label.trim().split_once('+').unwrap_or((label.trim(), "none"));
    let conv = match conv {
        "gcn" => ConvKind::Gcn,
        "gat" => ConvKind::Gat,
        "mlp" => ConvKind::Mlp,
        _ => return None,
    };
    let wrapper = match wrapper {
        "none" => Wrapper::None,
        "mmp" => Wrapper::Mmp,
        "jk" => Wrapper::Jk,
        "dropedge" => Wrapper::DropEdge,
        _ => return None,
    };
    (conv != ConvKind::Mlp || wrapper == Wrapper::None).then_some((conv, wrapper))
}

fn conv_name(c: ConvKind) -> &'static str {
    match c {
        ConvKind::Gcn => "gcn",
        ConvKind::Gat => "gat",
        ConvKind::Mlp => "mlp",
    }
}

fn wrapper_name(w: Wrapper) -> &'static str {
    match w {
        Wrapper::None => "none",
        Wrapper::Mmp => "mmp",
        Wrapper::Jk => "jk",
        Wrapper::DropEdge => "dropedge",
    }
}

fn bundle_dir(args: &DataArgs) -> Result<PathBuf> {
    let named = args.data_dir.join(args.dataset.to_lowercase());
    if named.is_dir() {
        return Ok(named);
    }
    let direct = Path::new(&args.dataset);
    if direct.is_dir() {
        return Ok(direct.to_path_buf());
    }
    Err(usage(format!(
        "unknown dataset `{}`: no bundle at {} (set --data-dir or MMP_DATA_DIR)",
        args.dataset,
        named.display()
    )))
}

fn load(args: &DataArgs) -> Result<DatasetBundle<f64>> {
    let dir = bundle_dir(args)?;
    let bundle = load_dataset(&dir, &LoadOptions { row_normalize: args.row_normalize })
        .with_context(|| format!("loading {}", dir.display()))?;
    log::info!(
        "{}: {} nodes, {} edges, {} classes",
        bundle.name,
        bundle.graph.num_nodes(),
        bundle.graph.num_edges(),
        bundle.graph.num_classes()
    );
    Ok(bundle)
}

fn make_splits(graph: &Graph<f64>, train: &TrainArgs) -> Result<Vec<Split>> {
    if train.splits == 0 {
        return Err(usage("--splits must be positive"));
    }
    Ok(generate_splits(
        graph,
        &SplitConfig {
            num_splits: train.splits,
            min_class_size: train.min_class_size,
            seed: train.seed,
            ..SplitConfig::default()
        },
    )?)
}

/// λ values to try for a model: the fixed value, the user grid or the
/// default grid for MMP; a single 0 for everything else.
fn lambda_grid(model: &ModelArgs, wrapper: Wrapper) -> Result<Vec<f64>> {
    if wrapper != Wrapper::Mmp {
        if model.lambda.is_some() || model.lambda_grid.is_some() {
            log::warn!("λ only applies to the mmp wrapper; ignoring it");
        }
        return Ok(vec![0.0]);
    }
    let grid = match (&model.lambda, &model.lambda_grid) {
        (Some(l), _) => vec![*l],
        (None, Some(g)) => g.clone(),
        (None, None) => LAMBDA_GRID.to_vec(),
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(usage("empty λ grid"));
    }
    if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(usage(format!("λ {bad} must be finite and >= 0")));
    }
    Ok(())
}

fn base_config(train: &TrainArgs, conv: ConvKind, wrapper: Wrapper, grid: &[f64]) -> Result<ModelConfig> {
    let cfg = train.config(conv, wrapper);
    for &lambda in grid {
        ModelConfig { lambda, ..cfg.clone() }.validate().map_err(|e| CliError::Usage(e.into()))?;
    }
    Ok(cfg)
}

/// Trains every (λ, split) pair; split `k` runs on `graphs[k]` with seed `seed + k`.
fn grid_runs(
    graphs: &[&Graph<f64>],
    splits: &[Split],
    cfg: &ModelConfig,
    grid: &[f64],
    jobs: usize,
) -> Result<Vec<(f64, SplitSummary)>> {
    let specs: Vec<RunSpec<'_, f64>> = grid
        .iter()
        .flat_map(|&lambda| {
            splits.iter().enumerate().map(move |(k, split)| RunSpec {
                graph: graphs[k],
                split,
                config: ModelConfig {
                    lambda,
                    seed: split_seed(cfg.seed, k),
                    ..cfg.clone()
                },
            })
        })
        .collect();
    let mut runs = run_all(&specs, jobs)?.into_iter();
    Ok(grid
        .iter()
        .map(|&l| (l, SplitSummary::from_runs(runs.by_ref().take(splits.len()).collect())))
        .collect())
}

/// Picks the entry with the best mean validation score.
fn select(results: Vec<(f64, SplitSummary)>) -> (f64, SplitSummary) {
    let scores: Vec<(f64, f64)> = results.iter().map(|(l, s)| (*l, s.mean_val)).collect();
    let best = pick_lambda(&scores).expect("grid is non-empty");
    results.into_iter().find(|(l, _)| *l == best).expect("picked λ is in the grid")
}

fn classify(a: &ClassifyArgs, out: &mut dyn Write) -> Result<()> {
    let (conv, wrapper) = (ConvKind::from(a.model.conv), Wrapper::from(a.model.wrapper));
    if conv == ConvKind::Mlp && wrapper != Wrapper::None {
        return Err(usage("mlp takes no wrapper"));
    }
    let grid = lambda_grid(&a.model, wrapper)?;
    let cfg = base_config(&a.train, conv, wrapper, &grid)?;
    let bundle = load(&a.data)?;
    let g = &bundle.graph;
    let splits = make_splits(g, &a.train)?;
    let graphs = vec![g; splits.len()];
    let results = grid_runs(&graphs, &splits, &cfg, &grid, a.train.jobs())?;

    if results.len() > 1 {
        writeln!(out, "{:>8} {:>9} {:>9}", "lambda", "val_acc", "test_acc")?;
        for (l, s) in &results {
            writeln!(out, "{:>8} {:>9.4} {:>9.4}", l, s.mean_val, s.mean_test)?;
        }
    }
    let (lambda, summary) = select(results);

    let rows: Vec<Vec<String>> = summary
        .runs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            vec![
                bundle.name.clone(),
                conv_name(conv).into(),
                wrapper_name(wrapper).into(),
                lambda.to_string(),
                k.to_string(),
                r.test_accuracy.to_string(),
                r.best_epoch.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    let bytes = csv_bytes(
        &["dataset", "model", "wrapper", "lambda", "split", "test_acc", "best_epoch", "seed"],
        &rows,
    )?;
    write_atomic(&a.out, &bytes)?;

    writeln!(
        out,
        "{:<12} {:<14} {:>6} {:>9} {:>8} {:>8}",
        "dataset", "model", "lambda", "test_acc", "stdev", "val_acc"
    )?;
    writeln!(
        out,
        "{:<12} {:<14} {:>6} {:>9.4} {:>8.4} {:>8.4}",
        bundle.name,
        cfg.label(),
        lambda,
        summary.mean_test,
        summary.stdev_test,
        summary.mean_val
    )?;
    let decouple: Vec<f64> = summary.runs.iter().filter_map(|r| r.decouple_loss).collect();
    if !decouple.is_empty() {
        let (raw, _) = mean_stdev(&decouple);
        writeln!(
            out,
            "decoupling loss: {raw:.4} raw, {:.6} per node",
            raw / g.num_nodes() as f64
        )?;
    }
    writeln!(out, "wrote {} rows to {}", rows.len(), a.out.display())?;
    Ok(())
}

fn noise(a: &NoiseArgs, out: &mut dyn Write) -> Result<()> {
    let models: Vec<(ConvKind, Wrapper)> = match &a.models {
        Some(labels) => labels
            .iter()
            .map(|l| parse_model(l).ok_or_else(|| usage(format!("unknown model `{l}`"))))
            .collect::<Result<_>>()?,
        None => vec![(a.model.conv.into(), a.model.wrapper.into())],
    };
    if let Some((c, w)) = models.iter().find(|(c, w)| *c == ConvKind::Mlp && *w != Wrapper::None) {
        return Err(usage(format!("{}+{} is not a model", conv_name(*c), wrapper_name(*w))));
    }
    if let Some(bad) = a.ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(usage(format!("edge ratio {bad} must be finite and >= 0")));
    }
    let plans = models
        .iter()
        .map(|&(conv, wrapper)| {
            let grid = lambda_grid(&a.model, wrapper)?;
            Ok((base_config(&a.train, conv, wrapper, &grid)?, grid))
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = load(&a.data)?;
    let splits = make_splits(&bundle.graph, &a.train)?;
    let jobs = a.train.jobs();

    let mut rows = Vec::new();
    writeln!(out, "{:>6} {:<14} {:>6} {:>9} {:>8}", "ratio", "model", "lambda", "mean_acc", "stdev")?;
    for &ratio in &a.ratios {
        let noisy = (0..splits.len())
            .map(|k| add_random_edges(&bundle.graph, ratio, split_seed(a.train.seed, k)))
            .collect::<mmp_core::Result<Vec<_>>>()
            .with_context(|| format!("adding edges at ratio {ratio}"))?;
        let graphs: Vec<&Graph<f64>> = noisy.iter().collect();
        for (cfg, grid) in &plans {
            let (lambda, s) = select(grid_runs(&graphs, &splits, cfg, grid, jobs)?);
            writeln!(
                out,
                "{:>6} {:<14} {:>6} {:>9.4} {:>8.4}",
                ratio,
                cfg.label(),
                lambda,
                s.mean_test,
                s.stdev_test
            )?;
            rows.push(vec![
                ratio.to_string(),
                cfg.label(),
                s.mean_test.to_string(),
                s.stdev_test.to_string(),
            ]);
        }
    }
    write_atomic(&a.out, &csv_bytes(&["ratio", "model", "mean_acc", "stdev"], &rows)?)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), a.out.display())?;
    Ok(())
}

fn lambda_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let conv = ConvKind::from(a.conv);
    if conv == ConvKind::Mlp {
        return Err(usage("the λ sweep needs a graph convolution (gcn or gat)"));
    }
    check_grid(&a.lambda_grid)?;
    let cfg = base_config(&a.train, conv, Wrapper::Mmp, &a.lambda_grid)?;
    let bundle = load(&a.data)?;
    let splits = make_splits(&bundle.graph, &a.train)?;
    let graphs = vec![&bundle.graph; splits.len()];
    let results = grid_runs(&graphs, &splits, &cfg, &a.lambda_grid, a.train.jobs())?;

    writeln!(out, "{:>8} {:>9} {:>8}", "lambda", "mean_acc", "stdev")?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(l, s)| {
            vec![l.to_string(), s.mean_test.to_string(), s.stdev_test.to_string()]
        })
        .collect();
    for (l, s) in &results {
        writeln!(out, "{:>8} {:>9.4} {:>8.4}", l, s.mean_test, s.stdev_test)?;
    }
    write_atomic(&a.out, &csv_bytes(&["lambda", "mean_acc", "stdev"], &rows)?)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), a.out.display())?;
    Ok(())
}

fn homophily(a: &HomophilyArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load(&a.data)?;
    let g = &bundle.graph;
    let h = edge_homophily(g)?;
    writeln!(out, "dataset\tnodes\tedges\tclasses\thomophily")?;
    writeln!(
        out,
        "{}\t{}\t{}\t{}\t{:.4}",
        bundle.name,
        g.num_nodes(),
        g.num_edges(),
        g.num_classes(),
        h
    )?;
    Ok(())
}

fn convert(a: &ConvertArgs, out: &mut dyn Write) -> Result<()> {
    if !a.input.is_dir() {
        return Err(usage(format!("input directory {} does not exist", a.input.display())));
    }
    let format = match a.format {
        FormatArg::PlanetoidText => ExternalFormat::PlanetoidText,
        FormatArg::WebkbText => ExternalFormat::WebkbText,
    };
    let b = convert_external(&a.input, format, &a.out)?;
    writeln!(
        out,
        "wrote {} ({} nodes, {} edges, {} classes) to {}",
        b.name,
        b.graph.num_nodes(),
        b.graph.num_edges(),
        b.graph.num_classes(),
        a.out.display()
    )?;
    if b.cleanup.self_loops + b.cleanup.duplicates > 0 {
        writeln!(
            out,
            "dropped {} self-loops and {} duplicate edges",
            b.cleanup.self_loops, b.cleanup.duplicates
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_labels() {
        assert_eq!(parse_model("gcn"), Some((ConvKind::Gcn, Wrapper::None)));
        assert_eq!(parse_model("gat+mmp"), Some((ConvKind::Gat, Wrapper::Mmp)));
        assert_eq!(parse_model("gcn+dropedge"), Some((ConvKind::Gcn, Wrapper::DropEdge)));
        assert_eq!(parse_model("mlp"), Some((ConvKind::Mlp, Wrapper::None)));
        assert_eq!(parse_model("mlp+jk"), None);
        assert_eq!(parse_model("sage"), None);
        assert_eq!(parse_model("gcn+foo"), None);
    }

    #[test]
    fn selection_prefers_validation_then_smaller_lambda() {
        let summary = |val: f64, test: f64| SplitSummary {
            mean_test: test,
            stdev_test: 0.0,
            mean_val: val,
            runs: vec![],
        };
        let (l, s) = select(vec![(0.0, summary(0.5, 0.9)), (0.2, summary(0.7, 0.1)), (0.4, summary(0.7, 0.2))]);
        assert_eq!(l, 0.2);
        assert_eq!(s.mean_test, 0.1);
    }
}
