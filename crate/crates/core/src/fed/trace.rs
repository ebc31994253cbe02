use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_COLUMNS: &str = "round,variant,alpha,seed,train_loss,val_acc,rel_val_acc,selected_clients";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    /// `100 · val_acc / reference`.
    pub rel_val_acc: f64,
    pub selected: Vec<usize>,
}

/// Test accuracy of the best-validation weights as of a checkpoint round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub best_round: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub rel_test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub rounds: usize,
    pub max_val_acc: f64,
    pub mean_val_acc: f64,
    pub max_rel_val_acc: f64,
    pub mean_rel_val_acc: f64,
    pub final_val_acc: f64,
    pub best_round: usize,
}

/// Per-round metrics of one federated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub variant: String,
    pub alpha: f64,
    pub seed: u64,
    pub reference_accuracy: f64,
    /// Extra `# key=value` provenance lines (config hash, ...).
    pub header: Vec<(String, String)>,
    pub records: Vec<RoundRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

impl MetricTrace {
    pub fn new(variant: &str, alpha: f64, seed: u64, reference_accuracy: f64) -> Self {
        MetricTrace {
            variant: variant.to_string(),
            alpha,
            seed,
            reference_accuracy,
            header: Vec::new(),
            records: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    pub fn relative(&self, acc: f64) -> f64 {
        100.0 * (acc / self.reference_accuracy)
    }

    pub fn summary(&self) -> Option<TraceSummary> {
        let last = self.records.last()?;
        let n = self.records.len() as f64;
        let best = self
            .records
            .iter()
            .fold(&self.records[0], |b, r| if r.val_acc > b.val_acc { r } else { b });
        Some(TraceSummary {
            rounds: self.records.len(),
            max_val_acc: best.val_acc,
            mean_val_acc: self.records.iter().map(|r| r.val_acc).sum::<f64>() / n,
            max_rel_val_acc: self.records.iter().map(|r| r.rel_val_acc).fold(f64::MIN, f64::max),
            mean_rel_val_acc: self.records.iter().map(|r| r.rel_val_acc).sum::<f64>() / n,
            final_val_acc: last.val_acc,
            best_round: best.round,
        })
    }

    /// Data rows without the header, one per round.
    pub fn csv_rows(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                let sel: Vec<String> = r.selected.iter().map(|c| c.to_string()).collect();
                format!(
                    "{},{},{},{},{},{},{},{}",
                    r.round,
                    self.variant,
                    self.alpha,
                    self.seed,
                    r.train_loss,
                    r.val_acc,
                    r.rel_val_acc,
                    sel.join(";")
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str(&format!("# seed={}\n", self.seed));
        s.push_str(&format!("# reference_accuracy={}\n", self.reference_accuracy));
        s.push_str(TRACE_COLUMNS);
        s.push('\n');
        for row in self.csv_rows() {
            s.push_str(&row);
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Parse a trace written by [`MetricTrace::to_csv`]. Checkpoints are not
    /// part of the CSV and come back empty.
    pub fn parse_csv(text: &str) -> Result<MetricTrace> {
        let bad = |line: usize, what: &str| Error::Format(format!("trace line {line}: {what}"));
        let mut trace = MetricTrace::new("", 0.0, 0, f64::NAN);
        let mut columns_seen = false;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(kv) = line.strip_prefix("# ") {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, "header without '='"))?;
                match k {
                    "seed" => trace.seed = v.parse().map_err(|_| bad(n, "seed"))?,
                    "reference_accuracy" => {
                        trace.reference_accuracy = v.parse().map_err(|_| bad(n, "reference"))?
                    }
                    _ => trace.header.push((k.to_string(), v.to_string())),
                }
                continue;
            }
            if !columns_seen {
                if line != TRACE_COLUMNS {
                    return Err(bad(n, "unexpected column header"));
                }
                columns_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(n, "expected 8 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "number"));
            trace.variant = f[1].to_string();
            trace.alpha = num(f[2])?;
            trace.records.push(RoundRecord {
                round: f[0].parse().map_err(|_| bad(n, "round"))?,
                train_loss: num(f[4])?,
                val_acc: num(f[5])?,
                rel_val_acc: num(f[6])?,
                selected: f[7]
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad(n, "client id")))
                    .collect::<Result<_>>()?,
            });
        }
        if !columns_seen {
            return Err(Error::Format("trace has no column header".into()));
        }
        Ok(trace)
    }

    pub fn read_csv(path: &Path) -> Result<MetricTrace> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MetricTrace::parse_csv(&text)
    }
}
