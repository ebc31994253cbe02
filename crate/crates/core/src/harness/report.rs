use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fed::MetricTrace;
use crate::harness::config::RunMode;
use crate::harness::experiment::{RunSummary, SUMMARY_FILE, TRACE_FILE};

/// A labelled grid of numbers; `None` cells print as `NA`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub key_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub keys: Vec<String>,
    pub values: Vec<Option<f64>>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"))
}

impl ReportTable {
    pub fn new(title: &str, key_columns: &[&str], value_columns: Vec<String>) -> Self {
        ReportTable {
            title: title.into(),
            key_columns: key_columns.iter().map(|s| s.to_string()).collect(),
            value_columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, keys: Vec<String>, values: Vec<Option<f64>>) {
        assert_eq!(keys.len(), self.key_columns.len(), "key arity");
        assert_eq!(values.len(), self.value_columns.len(), "value arity");
        self.rows.push(ReportRow { keys, values });
    }

    /// Value at the row whose keys match and the named column.
    pub fn get(&self, keys: &[&str], column: &str) -> Option<f64> {
        let c = self.value_columns.iter().position(|v| v == column)?;
        self.rows
            .iter()
            .find(|r| r.keys.iter().map(String::as_str).eq(keys.iter().copied()))?
            .values[c]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<&str> = self
            .key_columns
            .iter()
            .chain(&self.value_columns)
            .map(String::as_str)
            .collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in &self.rows {
            let mut f: Vec<String> = r.keys.clone();
            f.extend(r.values.iter().map(|v| cell(*v)));
            s.push_str(&f.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {}\n\n", self.title);
        let header: Vec<&str> = self
            .key_columns
            .iter()
            .chain(&self.value_columns)
            .map(String::as_str)
            .collect();
        let _ = writeln!(s, "| {} |", header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
        for r in &self.rows {
            let mut f: Vec<String> = r.keys.clone();
            f.extend(r.values.iter().map(|v| cell(*v)));
            let _ = writeln!(s, "| {} |", f.join(" | "));
        }
        s
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Methods in display order; unknown names sort after.
fn method_rank(m: &str) -> (usize, String) {
    let order = ["centralized", "fedavg", "fedprox", "fedir", "fedos"];
    (order.iter().position(|o| *o == m).unwrap_or(order.len()), m.to_string())
}

/// Relative test accuracy of the best-validation weights at each checkpoint
/// round, averaged over seeds: one row per method, one column per
/// `(alpha, rounds)` pair with alphas in descending order.
pub fn checkpoint_table(runs: &[RunSummary]) -> ReportTable {
    let mut alphas: Vec<f64> = runs.iter().map(|r| r.alpha).collect();
    alphas.sort_by(|a, b| b.total_cmp(a));
    alphas.dedup();
    let mut rounds: Vec<usize> = runs.iter().flat_map(|r| r.checkpoints.iter().map(|c| c.round)).collect();
    rounds.sort_unstable();
    rounds.dedup();
    let column = |a: f64, n: usize| format!("alpha={a} @{n} rounds");
    let columns: Vec<String> = alphas.iter().flat_map(|&a| rounds.iter().map(move |&n| column(a, n))).collect();
    let mut table = ReportTable::new("Relative accuracy @N rounds", &["method"], columns.clone());
    let mut methods: Vec<&str> = runs
        .iter()
        .filter(|r| r.mode == RunMode::Federated)
        .map(|r| r.variant.as_str())
        .collect();
    methods.sort_by_key(|m| method_rank(m));
    methods.dedup();
    for m in methods {
        let mut values = Vec::with_capacity(columns.len());
        for &a in &alphas {
            for &n in &rounds {
                let vals: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.variant == m && r.alpha == a)
                    .filter_map(|r| r.checkpoints.iter().find(|c| c.round == n))
                    .map(|c| c.rel_test_acc)
                    .collect();
                values.push(mean(&vals));
            }
        }
        table.push(vec![m.to_string()], values);
    }
    table
}

/// Max and mean relative validation accuracy per method and alpha,
/// averaged over seeds.
pub fn trace_table(runs: &[RunSummary]) -> ReportTable {
    let mut groups: BTreeMap<((usize, String), String), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.mode == RunMode::Federated) {
        groups.entry((method_rank(&r.variant), r.alpha.to_string())).or_default().push(r);
    }
    let mut table = ReportTable::new(
        "Relative validation accuracy",
        &["method", "alpha"],
        vec!["max".into(), "mean".into(), "seeds".into()],
    );
    for (((_, m), a), rs) in groups {
        let max: Vec<f64> = rs.iter().filter_map(|r| r.summary.as_ref()).map(|s| s.max_rel_val_acc).collect();
        let avg: Vec<f64> = rs.iter().filter_map(|r| r.summary.as_ref()).map(|s| s.mean_rel_val_acc).collect();
        table.push(vec![m, a], vec![mean(&max), mean(&avg), Some(rs.len() as f64)]);
    }
    table
}

/// Line chart of relative validation accuracy against round, one polyline
/// per trace.
pub fn traces_svg(traces: &[MetricTrace]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let max_round = traces.iter().flat_map(|t| t.records.last()).map(|r| r.round).max().unwrap_or(1).max(1);
    let max_y = traces
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.rel_val_acc))
        .filter(|v| v.is_finite())
        .fold(100.0f64, f64::max);
    let x = |r: usize| PAD + (W - 2.0 * PAD) * r as f64 / max_round as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v / max_y).clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">round</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">relative accuracy (%)</text>"#, H / 2.0, H / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{max_y:.0}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{max_round}</text>"#, W - PAD - 8.0, H - PAD + 14.0);
    for (i, t) in traces.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t
            .records
            .iter()
            .filter(|r| r.rel_val_acc.is_finite())
            .map(|r| format!("{:.1},{:.1}", x(r.round), y(r.rel_val_acc)))
            .collect();
        let label = format!("{} alpha={} seed={}", t.variant, t.alpha, t.seed);
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{label}</title></polyline>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{label}</text>"#,
            PAD + 8.0,
            PAD + 12.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// What [`emit_report`] wrote and what it could not find.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    pub runs: usize,
    /// Run directories whose trace is absent or unreadable.
    pub missing: Vec<PathBuf>,
}

fn find_summaries(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == SUMMARY_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

/// Collect every run under `root` and write `checkpoints.csv`,
/// `relative_accuracy.csv`, `report.md`, `traces.svg` and `report.json`
/// into `out`. Runs without a readable trace are listed as missing.
pub fn emit_report(root: &Path, out: &Path) -> Result<ReportOutcome> {
    let mut paths = Vec::new();
    find_summaries(root, &mut paths)?;
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    let mut outcome = ReportOutcome::default();
    for p in paths {
        let dir = p.parent().expect("summary has a parent").to_path_buf();
        let summary = match RunSummary::read(&p) {
            Ok(s) => s,
            Err(_) => {
                outcome.missing.push(dir);
                continue;
            }
        };
        match MetricTrace::read_csv(&dir.join(TRACE_FILE)) {
            Ok(t) => traces.push(t),
            Err(_) => outcome.missing.push(dir),
        }
        summaries.push(summary);
    }
    outcome.runs = summaries.len();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let checkpoints = checkpoint_table(&summaries);
    let rel = trace_table(&summaries);
    let mut md = format!("# Report\n\n{} runs\n\n", summaries.len());
    md.push_str(&checkpoints.to_markdown());
    md.push('\n');
    md.push_str(&rel.to_markdown());
    if !outcome.missing.is_empty() {
        md.push_str("\n### Missing traces\n\n");
        for m in &outcome.missing {
            let _ = writeln!(md, "- {}", m.display());
        }
    }
    let files = [
        ("checkpoints.csv", checkpoints.to_csv()),
        ("relative_accuracy.csv", rel.to_csv()),
        ("report.md", md),
        ("traces.svg", traces_svg(&traces)),
    ];
    for (name, text) in files {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        outcome.files.push(path);
    }
    let json = out.join("report.json");
    outcome.files.push(json.clone());
    let text = serde_json::to_string_pretty(&outcome).expect("serializable");
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(outcome)
}
