use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Preprocessing;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::pipeline::{prepare_data, run_centralized};
use crate::harness::report::ReportTable;

/// One centralized run of a preprocessing/learning-rate sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub preprocessing: Preprocessing,
    pub lr: f64,
    pub seed: u64,
    /// Highest per-epoch validation accuracy; absent when the run failed.
    pub best_val_acc: Option<f64>,
    /// Validation accuracy after the last epoch.
    pub final_val_acc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Mean over seeds of the best validation accuracy; `None` if any seed
    /// failed.
    pub fn mean_best(&self, p: Preprocessing, lr: f64) -> Option<f64> {
        let cells: Vec<&SweepCell> = self.cells.iter().filter(|c| c.preprocessing == p && c.lr == lr).collect();
        let accs: Option<Vec<f64>> = cells.iter().map(|c| c.best_val_acc).collect();
        accs.filter(|a| !a.is_empty()).map(|a| a.iter().sum::<f64>() / a.len() as f64)
    }

    /// Best learning rate's seed-mean accuracy for `p`.
    pub fn best_of_sweep(&self, p: Preprocessing) -> Option<f64> {
        let mut lrs: Vec<f64> = self.cells.iter().filter(|c| c.preprocessing == p).map(|c| c.lr).collect();
        lrs.dedup();
        lrs.iter().filter_map(|&lr| self.mean_best(p, lr)).reduce(f64::max)
    }

    /// Rows per preprocessing, one column per learning rate plus `best`.
    pub fn table(&self) -> ReportTable {
        let mut lrs: Vec<f64> = self.cells.iter().map(|c| c.lr).collect();
        lrs.sort_by(|a, b| b.total_cmp(a));
        lrs.dedup();
        let mut columns: Vec<String> = lrs.iter().map(|lr| format!("lr={lr}")).collect();
        columns.push("best".into());
        let mut t = ReportTable::new("Centralized validation accuracy (%)", &["preprocessing"], columns);
        let mut preps: Vec<Preprocessing> = Vec::new();
        for c in &self.cells {
            if !preps.contains(&c.preprocessing) {
                preps.push(c.preprocessing);
            }
        }
        for p in preps {
            let mut values: Vec<Option<f64>> = lrs.iter().map(|&lr| self.mean_best(p, lr).map(|a| 100.0 * a)).collect();
            values.push(self.best_of_sweep(p).map(|a| 100.0 * a));
            t.push(vec![p.tag().into()], values);
        }
        t
    }
}

/// Centralized runs over every `(preprocessing, lr, seed)` of `base`.
/// Cells are independent and run concurrently; a diverged cell is recorded
/// rather than aborting the sweep.
pub fn run_preprocessing_sweep(
    base: &ExperimentConfig,
    preprocessings: &[Preprocessing],
    lrs: &[f64],
) -> Result<SweepResult> {
    let mut cells = Vec::new();
    for &p in preprocessings {
        let mut cfg = base.clone();
        cfg.dataset.preprocessing = p;
        cfg.validate()?;
        let data = prepare_data(&cfg)?;
        let jobs: Vec<(f64, u64)> = lrs.iter().flat_map(|&lr| base.seeds.iter().map(move |&s| (lr, s))).collect();
        let done: Vec<SweepCell> = jobs
            .par_iter()
            .map(|&(lr, seed)| {
                let mut c = cfg.clone();
                c.rounds.lr = lr;
                match run_centralized(&c, &data, seed) {
                    Ok(run) => SweepCell {
                        preprocessing: p,
                        lr,
                        seed,
                        best_val_acc: Some(run.best_val_acc),
                        final_val_acc: Some(run.reference_accuracy),
                        error: None,
                    },
                    Err(e) => SweepCell {
                        preprocessing: p,
                        lr,
                        seed,
                        best_val_acc: None,
                        final_val_acc: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        cells.extend(done);
    }
    Ok(SweepResult { cells })
}
