//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria that need the real benchmark bundles look for them under
//! `MMP_DATA_DIR` (or `data/` at the workspace root). A missing bundle is a
//! FAIL, but it only fails the process when `MMP_ACCEPTANCE_STRICT` is set;
//! a criterion that ran and missed its target always fails it (except the
//! soft λ criterion, which is reported only).

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use mmp_core::autodiff::{Reduction, Tape, Var};
use mmp_core::gradcheck::GradCheck;
use mmp_core::graph::{edge_homophily, gcn_normalize, generate_splits, Graph, SplitConfig};
use mmp_core::layers::{ConvKind, GraphOps, LayerState, Model, ModelOptions, Session, Wrapper};
use mmp_core::losses::{decoupling_loss, COSINE_EPS};
use mmp_core::sparse::CsrMatrix;
use mmp_core::synthetic::{contextual_sbm, SbmConfig};
use mmp_core::tensor::Matrix;
use mmp_core::trainer::mean_stdev;
use mmp_core::{seeded_rng, RngStream};
use rand::Rng;

type Criterion = (u32, &'static str, bool, Box<dyn Fn() -> Outcome>);
type OpFn<'a> = &'a dyn Fn(&mut Tape<f64>, &[Var]) -> mmp_core::Result<Var>;

const GRAD_TOL: f64 = 1e-4;
const EXACT_TOL: f64 = 1e-12;

enum Status {
    Pass,
    Fail,
    /// Needed data is not available.
    Missing,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            status: if pass { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        }
    }

    fn missing(names: &[&str], dir: &Path) -> Self {
        Self {
            status: Status::Missing,
            detail: format!("no bundle for {} under {}", names.join(", "), dir.display()),
        }
    }
}

fn main() {
    let data_dir = std::env::var_os("MMP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).unwrap().join("data"));
    let strict = std::env::var_os("MMP_ACCEPTANCE_STRICT").is_some();

    let criteria: Vec<Criterion> = vec![
        (1, "gradient correctness", false, Box::new(gradients)),
        (2, "degeneracy equivalence", false, Box::new(degeneracy)),
        (3, "homophily reproduction", false, Box::new({
            let d = data_dir.clone();
            move || homophily(&d)
        })),
        (4, "homophilous accuracy band (cora gcn)", false, Box::new({
            let d = data_dir.clone();
            move || cora_band(&d)
        })),
        (5, "heterophilous improvement (texas, wisconsin)", false, Box::new({
            let d = data_dir.clone();
            move || heterophilous(&d)
        })),
        (6, "noise robustness (cora +500%)", false, Box::new({
            let d = data_dir.clone();
            move || noise_robustness(&d)
        })),
        (7, "λ regularization (texas, soft)", true, Box::new({
            let d = data_dir.clone();
            move || lambda_regularization(&d)
        })),
        (8, "determinism", false, Box::new(determinism)),
        (9, "oracle equivalence", false, Box::new(oracles)),
    ];

    let mut failed = false;
    let mut passed = 0;
    for (id, name, soft, run) in &criteria {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = match out.status {
            Status::Pass => {
                passed += 1;
                "PASS"
            }
            Status::Fail => {
                failed |= !soft;
                "FAIL"
            }
            Status::Missing => {
                failed |= strict;
                "FAIL"
            }
        };
        println!("{tag} {id} {name}: {} ({secs:.1}s)", out.detail);
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if failed {
        std::process::exit(1);
    }
}

fn random(rows: usize, cols: usize, rng: &mut mmp_core::Rng) -> Matrix<f64> {
    Matrix::uniform(rows, cols, -1.0, 1.0, rng)
}

fn random_graph(n: usize, d: usize, c: usize, m: usize, rng: &mut mmp_core::Rng) -> Graph<f64> {
    let x = random(n, d, rng);
    let labels = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
    Graph::from_edges(x, labels, c, edges).unwrap().0
}

// ---- 1 ----------------------------------------------------------------

fn gradients() -> Outcome {
    let start = Instant::now();
    let gc = GradCheck::default();
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    let mut note = |e: f64| {
        worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
        checks += 1;
    };
    for case in 0..20u64 {
        let mut rng = seeded_rng(case, RngStream::Synthetic);
        let n = rng.gen_range(3..=10);
        let d = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=8);
        let a = random(n, d, &mut rng);
        let b = random(n, d, &mut rng);
        let w = random(d, k, &mut rng);
        let row = random(1, d, &mut rng);
        let col = random(n, 1, &mut rng);
        // keep kinks of relu/abs/leaky relu outside the stencil
        let x = a.map(|v| if v.abs() < 0.05 { v + v.signum() * 0.05 } else { v });
        let run = |inputs: &[Matrix<f64>], f: OpFn<'_>| {
            gc.op_error(inputs, case, f).unwrap_or(f64::NAN)
        };
        note(run(&[a.clone(), w.clone()], &|t, v| t.matmul(v[0], v[1])));
        note(run(&[a.clone(), b.clone()], &|t, v| t.add(v[0], v[1])));
        note(run(&[a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1])));
        note(run(&[a.clone(), b.clone()], &|t, v| t.mul(v[0], v[1])));
        note(run(&[a.clone(), row.clone()], &|t, v| t.add_row_vector(v[0], v[1])));
        note(run(&[a.clone(), col.clone()], &|t, v| t.scale_rows(v[0], v[1])));
        note(run(&[a.clone(), b.clone()], &|t, v| t.concat_cols(&[v[0], v[1]])));
        note(run(&[a.clone(), b.clone()], &|t, v| t.cosine_similarity_rows(v[0], v[1], COSINE_EPS)));
        note(run(std::slice::from_ref(&x), &|t, v| t.relu(v[0])));
        note(run(std::slice::from_ref(&x), &|t, v| t.leaky_relu(v[0], 0.2)));
        note(run(std::slice::from_ref(&x), &|t, v| t.sigmoid(v[0])));
        note(run(std::slice::from_ref(&x), &|t, v| t.abs(v[0])));
        note(run(std::slice::from_ref(&x), &|t, v| t.scale(v[0], 0.7)));
        note(run(std::slice::from_ref(&x), &|t, v| t.sum(v[0])));
        note(run(std::slice::from_ref(&x), &|t, v| t.slice_cols(v[0], 0, d)));
        let index = Arc::new((0..n).rev().collect::<Vec<_>>());
        note(run(std::slice::from_ref(&x), &|t, v| t.gather_rows(v[0], &index)));
        note(run(std::slice::from_ref(&x), &|t, v| {
            let mut r = seeded_rng(case, RngStream::Training);
            t.dropout(v[0], 0.3, true, &mut r)
        }));
        let adj = Arc::new(
            CsrMatrix::from_triplets(
                n,
                n,
                (0..n).flat_map(|i| [(i, i, 0.5), (i, (i + 1) % n, 0.3), ((i + 2) % n, i, 0.2)]),
            )
            .unwrap(),
        );
        let ew = random(adj.nnz(), 1, &mut rng);
        let offsets = Arc::new(adj.row_ptr().to_vec());
        note(run(std::slice::from_ref(&a), &|t, v| t.spmm(&adj, v[0])));
        note(run(&[ew.clone(), a.clone()], &|t, v| t.edge_aggregate(&adj, v[0], v[1])));
        note(run(&[ew], &|t, v| t.segment_softmax(v[0], &offsets)));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..d.max(2))).collect();
        let logits = random(n, d.max(2), &mut rng);
        let mask: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        for reduction in [Reduction::Sum, Reduction::Mean] {
            note(run(std::slice::from_ref(&logits), &|t, v| t.softmax_cross_entropy(v[0], &labels, &mask, reduction)));
        }
    }
    let mut model_worst = 0.0f64;
    for seed in 0..3 {
        let mut rng = seeded_rng(seed, RngStream::Synthetic);
        let g = random_graph(10, 8, 3, 20, &mut rng);
        let opts = ModelOptions {
            wrapper: Wrapper::Mmp,
            num_layers: 2,
            hidden: 4,
            dropout: 0.0,
            ..Default::default()
        };
        let model = Model::new(opts, 8, 3, &mut seeded_rng(seed, RngStream::Training)).unwrap();
        let ops = GraphOps::for_conv(&g, ConvKind::Gcn);
        let mask: Vec<bool> = (0..10).map(|i| i % 3 != 2).collect();
        let e = gc.model_error(&model, &ops, &g, &mask, 0.5).map_or(f64::INFINITY, |r| r.0);
        model_worst = model_worst.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::check(
        worst < GRAD_TOL && model_worst < GRAD_TOL && secs < 60.0,
        format!("{checks} op checks worst {worst:.2e}, gcn+mmp model worst {model_worst:.2e}, tolerance {GRAD_TOL:e}"),
    )
}

// ---- 2 ----------------------------------------------------------------

fn degeneracy() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let g: Graph<f64> = contextual_sbm(&SbmConfig {
            nodes_per_class: 10,
            num_classes: 5,
            feature_dim: 12,
            seed,
            ..Default::default()
        })
        .unwrap();
        let plain_opts = ModelOptions { hidden: 16, ..Default::default() };
        let bypass_opts = ModelOptions {
            wrapper: Wrapper::Mmp,
            bypass_memory: true,
            ..plain_opts.clone()
        };
        let plain = Model::new(plain_opts, 12, 5, &mut seeded_rng(seed, RngStream::Training)).unwrap();
        let mut bypass = Model::new(bypass_opts, 12, 5, &mut seeded_rng(seed + 100, RngStream::Training)).unwrap();
        bypass.copy_shared_from(&plain);
        let ops = GraphOps::for_conv(&g, ConvKind::Gcn);
        let forward = |m: &Model<f64>, training: bool| {
            let mut r = seeded_rng(7, RngStream::Training);
            let mut sess = Session::new(m.params(), training, &mut r);
            let x = sess.tape.constant_shared(g.shared_features());
            let out = m.forward(&mut sess, &ops, x).unwrap();
            sess.tape.value(out.logits).clone()
        };
        for training in [false, true] {
            worst = worst.max(forward(&plain, training).max_abs_diff(&forward(&bypass, training)));
        }
    }
    Outcome::check(worst <= EXACT_TOL, format!("50-node graphs, max |Δlogit| {worst:.2e}"))
}

// ---- 3 ----------------------------------------------------------------

/// Reference edge homophily per dataset; the second name is an alternative
/// bundle directory.
const HOMOPHILY: [(&str, &str, f64); 9] = [
    ("texas", "texas", 0.11),
    ("wisconsin", "wisconsin", 0.21),
    ("actor", "film", 0.22),
    ("squirrel", "squirrel", 0.22),
    ("chameleon", "chameleon", 0.23),
    ("cornell", "cornell", 0.30),
    ("citeseer", "citeseer", 0.74),
    ("pubmed", "pubmed", 0.80),
    ("cora", "cora", 0.81),
];

fn find_bundle(data_dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names
        .iter()
        .map(|n| data_dir.join(n))
        .find(|p| p.join(mmp_core::dataset::META_FILE).is_file())
}

fn homophily(data_dir: &Path) -> Outcome {
    let mut missing = Vec::new();
    let mut report = Vec::new();
    let mut ok = true;
    for (name, alt, reference) in HOMOPHILY {
        let Some(dir) = find_bundle(data_dir, &[name, alt]) else {
            missing.push(name);
            continue;
        };
        let h = mmp_core::dataset::load_dataset::<f64>(&dir, &Default::default())
            .map_err(|e| e.to_string())
            .and_then(|b| edge_homophily(&b.graph).map_err(|e| e.to_string()));
        match h {
            Ok(h) => {
                ok &= (h - reference).abs() <= 0.02;
                report.push(format!("{name} {h:.3} (ref {reference})"));
            }
            Err(e) => {
                ok = false;
                report.push(format!("{name} error: {e}"));
            }
        }
    }
    if !missing.is_empty() {
        let mut out = Outcome::missing(&missing, data_dir);
        if !report.is_empty() {
            out.detail = format!("{}; loaded: {}", out.detail, report.join(", "));
        }
        return out;
    }
    Outcome::check(ok, format!("{}; tolerance ±0.02", report.join(", ")))
}

// ---- experiment criteria via the binary ---------------------------------

fn run_mmp(args: &[&str], data_dir: &Path, work: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_mmp"))
        .args(args)
        .arg("--data-dir")
        .arg(data_dir)
        .current_dir(work)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("`mmp {}` failed: {}", args.join(" "), String::from_utf8_lossy(&o.stderr).trim()))
    }
}

/// Mean test accuracy of a `classify` run.
fn classify_mean(dataset: &str, extra: &[&str], data_dir: &Path) -> Result<f64, String> {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut args = vec!["classify", "--dataset", dataset, "--out", "r.csv"];
    args.extend_from_slice(extra);
    run_mmp(&args, data_dir, work.path())?;
    let (_, rows) = common::read_csv(&work.path().join("r.csv"));
    let accs: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    if accs.len() != 10 {
        return Err(format!("expected 10 rows, got {}", accs.len()));
    }
    Ok(mean_stdev(&accs).0)
}

fn cora_band(data_dir: &Path) -> Outcome {
    if find_bundle(data_dir, &["cora"]).is_none() {
        return Outcome::missing(&["cora"], data_dir);
    }
    match classify_mean("cora", &["--conv", "gcn"], data_dir) {
        Ok(m) => Outcome::check((0.84..=0.90).contains(&m), format!("mean test accuracy {m:.4}, band [0.84, 0.90]")),
        Err(e) => Outcome::check(false, e),
    }
}

fn heterophilous(data_dir: &Path) -> Outcome {
    let missing: Vec<&str> = ["texas", "wisconsin"]
        .into_iter()
        .filter(|n| find_bundle(data_dir, &[n]).is_none())
        .collect();
    if !missing.is_empty() {
        return Outcome::missing(&missing, data_dir);
    }
    let mut ok = true;
    let mut report = Vec::new();
    for name in ["texas", "wisconsin"] {
        let gcn = classify_mean(name, &["--conv", "gcn"], data_dir);
        let mmp = classify_mean(name, &["--conv", "gcn", "--wrapper", "mmp"], data_dir);
        match (gcn, mmp) {
            (Ok(g), Ok(m)) => {
                ok &= m - g >= 0.10;
                report.push(format!("{name} gcn {g:.4} gcn+mmp {m:.4} (Δ {:+.1} pp)", 100.0 * (m - g)));
            }
            (Err(e), _) | (_, Err(e)) => {
                ok = false;
                report.push(e);
            }
        }
    }
    Outcome::check(ok, format!("{}; need Δ ≥ +10 pp", report.join(", ")))
}

fn noise_robustness(data_dir: &Path) -> Outcome {
    if find_bundle(data_dir, &["cora"]).is_none() {
        return Outcome::missing(&["cora"], data_dir);
    }
    let work = match tempfile::tempdir() {
        Ok(w) => w,
        Err(e) => return Outcome::check(false, e.to_string()),
    };
    let args = ["noise", "--dataset", "cora", "--ratios", "5", "--models", "gcn,gcn+mmp", "--out", "n.csv"];
    if let Err(e) = run_mmp(&args, data_dir, work.path()) {
        return Outcome::check(false, e);
    }
    let (_, rows) = common::read_csv(&work.path().join("n.csv"));
    let acc = |model: &str| rows.iter().find(|r| r[1] == model).map(|r| r[2].parse::<f64>().unwrap());
    match (acc("gcn"), acc("gcn+mmp")) {
        (Some(g), Some(m)) => Outcome::check(m > g, format!("+500% edges: gcn {g:.4}, gcn+mmp {m:.4}")),
        _ => Outcome::check(false, "noise.csv lacks a model row"),
    }
}

fn lambda_regularization(data_dir: &Path) -> Outcome {
    if find_bundle(data_dir, &["texas"]).is_none() {
        return Outcome::missing(&["texas"], data_dir);
    }
    let selected = classify_mean("texas", &["--conv", "gcn", "--wrapper", "mmp"], data_dir);
    let zero = classify_mean("texas", &["--conv", "gcn", "--wrapper", "mmp", "--lambda", "0"], data_dir);
    match (selected, zero) {
        (Ok(s), Ok(z)) => Outcome::check(s >= z, format!("validation-selected λ {s:.4}, λ = 0 {z:.4}")),
        (Err(e), _) | (_, Err(e)) => Outcome::check(false, e),
    }
}

// ---- 8 ----------------------------------------------------------------

fn determinism() -> Outcome {
    let data = tempfile::tempdir().unwrap();
    common::synthetic_bundle(data.path(), "sbm", &common::small());
    let mut outputs = Vec::new();
    for jobs in ["4", "4", "1"] {
        let work = tempfile::tempdir().unwrap();
        let args = [
            "classify", "--dataset", "sbm", "--seed", "7", "--wrapper", "mmp", "--max-epochs", "40", "--hidden", "16",
            "--jobs", jobs,
        ];
        if let Err(e) = run_mmp(&args, data.path(), work.path()) {
            return Outcome::check(false, e);
        }
        outputs.push(std::fs::read(work.path().join("results.csv")).unwrap());
    }
    Outcome::check(
        outputs[0] == outputs[1] && outputs[1] == outputs[2],
        format!("3 runs of classify --seed 7 ({} bytes each) identical: {}", outputs[0].len(), outputs[0] == outputs[1] && outputs[1] == outputs[2]),
    )
}

// ---- 9 ----------------------------------------------------------------

fn dense_normalized(g: &Graph<f64>) -> Matrix<f64> {
    let n = g.num_nodes();
    let mut a = Matrix::identity(n);
    for (i, j) in g.edges() {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] /= deg[i].sqrt() * deg[j].sqrt();
        }
    }
    a
}

fn brute_decoupling(pairs: &[(Matrix<f64>, Matrix<f64>)]) -> f64 {
    let mut total = 0.0;
    for (c, h) in pairs {
        for i in 0..c.rows() {
            let (mut dot, mut nc, mut nh) = (0.0, 0.0, 0.0);
            for j in 0..c.cols() {
                dot += c[(i, j)] * h[(i, j)];
                nc += c[(i, j)] * c[(i, j)];
                nh += h[(i, j)] * h[(i, j)];
            }
            total += (dot / (nc.sqrt().max(COSINE_EPS) * nh.sqrt().max(COSINE_EPS))).abs();
        }
    }
    total
}

fn oracles() -> Outcome {
    let (mut spmm_err, mut dec_err) = (0.0f64, 0.0f64);
    let mut split_ok = true;
    for case in 0..50u64 {
        let mut rng = seeded_rng(case, RngStream::Synthetic);
        let n = rng.gen_range(1..=50);
        let d = rng.gen_range(1..=8);
        let g = random_graph(n, d, 3, rng.gen_range(0..3 * n), &mut rng);
        let x = random(n, d, &mut rng);
        let sparse = gcn_normalize(&g).matrix().spmm(&x).unwrap();
        let dense = dense_normalized(&g).matmul(&x).unwrap();
        spmm_err = spmm_err.max(sparse.max_abs_diff(&dense));

        let mut t = Tape::<f64>::new();
        let h0 = t.constant(random(n, d, &mut rng));
        let mut states = vec![LayerState::plain(h0)];
        let mut pairs = Vec::new();
        for _ in 0..2 {
            let (c, h) = (random(n, d, &mut rng), random(n, d, &mut rng));
            states.push(LayerState {
                hidden: t.constant(h.clone()),
                memory: Some(t.constant(c.clone())),
                gates: None,
            });
            pairs.push((c, h));
        }
        let dec = decoupling_loss(&mut t, &states, false).unwrap();
        let value = t.scalar(dec).unwrap();
        let brute = brute_decoupling(&pairs);
        dec_err = dec_err.max((value - brute).abs());

        // splits: per-class counts from independent rounding, disjoint and covering
        let sbm: Graph<f64> = contextual_sbm(&SbmConfig {
            nodes_per_class: rng.gen_range(4..=12),
            num_classes: rng.gen_range(2..=4),
            feature_dim: 2,
            avg_degree: 1.0,
            seed: case,
            ..Default::default()
        })
        .unwrap();
        let splits = generate_splits(&sbm, &SplitConfig { seed: case, ..Default::default() }).unwrap();
        for s in &splits {
            let mut seen = vec![0u8; sbm.num_nodes()];
            for &i in s.train.iter().chain(&s.val).chain(&s.test) {
                seen[i] += 1;
            }
            split_ok &= seen.iter().all(|&c| c == 1);
            for class in 0..sbm.num_classes() {
                let size = sbm.labels().iter().filter(|&&l| l == class).count() as f64;
                let count = |set: &[usize]| set.iter().filter(|&&i| sbm.labels()[i] == class).count() as f64;
                let train = (0.48 * size).round();
                let val = (0.32 * size).round().min(size - train);
                split_ok &= count(&s.train) == train && count(&s.val) == val && count(&s.test) == size - train - val;
            }
        }
    }
    Outcome::check(
        spmm_err <= EXACT_TOL && dec_err <= EXACT_TOL && split_ok,
        format!("50 instances ≤ 50 nodes: spmm {spmm_err:.1e}, decoupling {dec_err:.1e}, split counts exact: {split_ok}"),
    )
}
