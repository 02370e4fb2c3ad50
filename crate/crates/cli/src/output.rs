use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failed run never leaves a truncated CSV behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Serialises rows with a header into CSV bytes.
pub(crate) fn csv_bytes<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    w.into_inner().context("flushing CSV buffer")
}

type MeanStdev = (f64, f64);

fn parse_f64(s: &str, col: &str) -> Result<f64> {
    s.trim().parse().with_context(|| format!("column {col}: `{s}` is not a number"))
}

fn fmt_num(v: Option<&f64>) -> String {
    v.map_or_else(|| "NaN".into(), |v| v.to_string())
}

/// Reshapes one of the experiment CSVs into whitespace-separated columns
/// with a `#` header line, grouped by model:
///
/// * noise CSV: `ratio <model> <model>_stdev ...`
/// * λ CSV: `lambda mean_acc stdev`
/// * results CSV: `split <model> ...` holding per-split test accuracy
pub fn plotdata(csv_text: &str) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;

    let mut out = String::new();
    if let (Some(ci), Some(cm), Some(ca), Some(cs)) = (col("ratio"), col("model"), col("mean_acc"), col("stdev")) {
        let mut models = BTreeSet::new();
        // keyed by a zero-padded ratio so rows sort numerically
        let mut table: BTreeMap<String, (f64, BTreeMap<String, MeanStdev>)> = BTreeMap::new();
        for r in &records {
            let ratio = parse_f64(&r[ci], "ratio")?;
            let model = r[cm].to_string();
            models.insert(model.clone());
            table
                .entry(format!("{ratio:020.6}"))
                .or_insert_with(|| (ratio, BTreeMap::new()))
                .1
                .insert(model, (parse_f64(&r[ca], "mean_acc")?, parse_f64(&r[cs], "stdev")?));
        }
        out.push_str("# ratio");
        for m in &models {
            out.push_str(&format!(" {m} {m}_stdev"));
        }
        out.push('\n');
        for (ratio, row) in table.values() {
            out.push_str(&ratio.to_string());
            for m in &models {
                let cell = row.get(m);
                out.push_str(&format!(" {} {}", fmt_num(cell.map(|c| &c.0)), fmt_num(cell.map(|c| &c.1))));
            }
            out.push('\n');
        }
    } else if let (Some(cl), Some(ca), Some(cs)) = (col("lambda"), col("mean_acc"), col("stdev")) {
        out.push_str("# lambda mean_acc stdev\n");
        let mut rows = records
            .iter()
            .map(|r| Ok((parse_f64(&r[cl], "lambda")?, parse_f64(&r[ca], "mean_acc")?, parse_f64(&r[cs], "stdev")?)))
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (l, a, s) in rows {
            out.push_str(&format!("{l} {a} {s}\n"));
        }
    } else if let (Some(cm), Some(cw), Some(cs), Some(ct)) = (col("model"), col("wrapper"), col("split"), col("test_acc")) {
        let mut models = BTreeSet::new();
        let mut table: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
        for r in &records {
            let label = if &r[cw] == "none" { r[cm].to_string() } else { format!("{}+{}", &r[cm], &r[cw]) };
            let split: usize = r[cs].trim().parse().with_context(|| format!("bad split index `{}`", &r[cs]))?;
            models.insert(label.clone());
            table.entry(split).or_default().insert(label, parse_f64(&r[ct], "test_acc")?);
        }
        out.push_str("# split");
        for m in &models {
            out.push_str(&format!(" {m}"));
        }
        out.push('\n');
        for (split, row) in &table {
            out.push_str(&split.to_string());
            for m in &models {
                out.push_str(&format!(" {}", fmt_num(row.get(m))));
            }
            out.push('\n');
        }
    } else {
        bail!("unrecognised CSV header: {}", header.join(","));
    }
    Ok(out)
}
