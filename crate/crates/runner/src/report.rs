//! Long-format CSV and final-value summaries from metric JSONL files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

/// Index column per line kind: rounds (or epochs) for training runs, the QP
/// for compression sweeps.
fn index_key(kind: &str) -> Result<&'static str> {
    match kind {
        "federated" | "central" => Ok("round"),
        "sweep" => Ok("qp"),
        other => bail!("unknown metric line kind `{other}`"),
    }
}

/// Fields that describe a line rather than measure it.
const NON_METRICS: &[&str] = &["kind", "round", "qp", "algorithm"];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub run_id: String,
    pub index: i64,
    pub metric: String,
    pub value: f64,
}

/// Parsed metric files, all of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: String,
    pub rows: Vec<Row>,
}

/// Run id of a metric file: its parent directory name, or the file stem.
pub fn run_id(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Accepts metric files or run directories (which contribute their
/// `metrics.jsonl`, or `sweep.jsonl` when there is no metric file).
pub fn resolve_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let metrics = p.join(crate::pipeline::METRICS_FILE);
            let sweep = p.join(crate::pipeline::SWEEP_FILE);
            if metrics.is_file() {
                files.push(metrics);
            } else if sweep.is_file() {
                files.push(sweep);
            } else {
                bail!("{} contains no metric file", p.display());
            }
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn load(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        bail!("report needs at least one metric file");
    }
    let mut kind: Option<String> = None;
    let mut rows = Vec::new();
    let mut seen_ids: BTreeMap<String, usize> = BTreeMap::new();
    for path in paths {
        let base = run_id(path);
        let n = seen_ids.entry(base.clone()).or_default();
        *n += 1;
        let id = if *n == 1 { base } else { format!("{base}#{n}") };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let at = || format!("{}:{}", path.display(), lineno + 1);
            let value: Value = serde_json::from_str(line).with_context(at)?;
            let obj = value
                .as_object()
                .ok_or_else(|| anyhow!("{}: expected a JSON object", at()))?;
            let line_kind = obj
                .get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| anyhow!("{}: missing `kind`", at()))?;
            match &kind {
                None => kind = Some(line_kind.to_string()),
                Some(k) if k != line_kind => {
                    bail!("{}: cannot mix `{line_kind}` lines into a `{k}` report", at())
                }
                _ => {}
            }
            let key = index_key(line_kind)?;
            let index = obj
                .get(key)
                .and_then(Value::as_i64)
                .ok_or_else(|| anyhow!("{}: missing integer `{key}`", at()))?;
            for (name, v) in obj {
                if NON_METRICS.contains(&name.as_str()) {
                    continue;
                }
                if let Some(x) = v.as_f64() {
                    rows.push(Row {
                        run_id: id.clone(),
                        index,
                        metric: name.clone(),
                        value: x,
                    });
                }
            }
        }
    }
    Ok(Report {
        kind: kind.ok_or_else(|| anyhow!("metric files are empty"))?,
        rows,
    })
}

impl Report {
    pub fn index_name(&self) -> &'static str {
        index_key(&self.kind).unwrap_or("round")
    }

    /// `run_id,<index>,metric,value` with one row per measured value.
    pub fn to_csv(&self) -> String {
        let mut s = format!("run_id,{},metric,value\n", self.index_name());
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", csv_field(&r.run_id), r.index, r.metric, r.value);
        }
        s
    }

    /// Value of every metric at the highest index it was recorded at, per run.
    pub fn final_values(&self) -> BTreeMap<String, BTreeMap<String, (i64, f64)>> {
        let mut out: BTreeMap<String, BTreeMap<String, (i64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            let slot = out
                .entry(r.run_id.clone())
                .or_default()
                .entry(r.metric.clone())
                .or_insert((r.index, r.value));
            if r.index >= slot.0 {
                *slot = (r.index, r.value);
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let finals = self.final_values();
        let mut s = String::new();
        for (run, metrics) in &finals {
            let _ = writeln!(s, "{run}");
            let width = metrics.keys().map(String::len).max().unwrap_or(0);
            for (name, (index, value)) in metrics {
                let _ = writeln!(s, "  {name:<width$}  {value:>14.6}  ({} {index})", self.index_name());
            }
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `report.csv` and `summary.txt` into `out`.
pub fn emit(inputs: &[PathBuf], out: &Path) -> Result<Report> {
    let report = load(&resolve_inputs(inputs)?)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("summary.txt"), report.summary())?;
    Ok(report)
}
