use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{reference_accuracy, run_experiment_on};
use crate::harness::pipeline::{prepare_data, PreparedData};
use crate::harness::report::ReportTable;

/// Hyperparameter varied by an ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Alpha,
    LocalEpochs,
    ClientFraction,
    WU,
    FU,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "alpha" => AblationAxis::Alpha,
            "local_epochs" | "e" => AblationAxis::LocalEpochs,
            "client_fraction" | "cl" => AblationAxis::ClientFraction,
            "w_u" => AblationAxis::WU,
            "f_u" => AblationAxis::FU,
            _ => {
                return Err(Error::Config {
                    path: "ablation.axis".into(),
                    message: format!("unknown axis `{s}` (alpha, local_epochs, client_fraction, w_u, f_u)"),
                })
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Alpha => "alpha",
            AblationAxis::LocalEpochs => "local_epochs",
            AblationAxis::ClientFraction => "client_fraction",
            AblationAxis::WU => "w_u",
            AblationAxis::FU => "f_u",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        match self {
            AblationAxis::Alpha => c.partition.alpha = value,
            AblationAxis::LocalEpochs => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config {
                        path: "rounds.local_epochs".into(),
                        message: format!("{value} is not a positive integer"),
                    });
                }
                c.rounds.local_epochs = value as usize;
            }
            AblationAxis::ClientFraction => c.rounds.client_fraction = value,
            AblationAxis::WU => c.variant.w_u = value,
            AblationAxis::FU => c.variant.f_u = value,
        }
        c.output_dir = base.output_dir.join(format!("{}={value}", self.name()));
        c.validate()?;
        Ok(c)
    }
}

/// One axis value of an ablation; `error` is set when the cell's runs failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub value: f64,
    pub dir: PathBuf,
    pub max_rel_val_acc: Option<f64>,
    pub mean_rel_val_acc: Option<f64>,
    pub seeds: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub axis: AblationAxis,
    pub variant: String,
    pub reference_accuracy: f64,
    pub cells: Vec<AblationCell>,
}

impl AblationMatrix {
    pub fn table(&self) -> ReportTable {
        let mut t = ReportTable::new(
            &format!("Ablation over {}", self.axis.name()),
            &["method", self.axis.name()],
            vec!["max_rel_val_acc".into(), "mean_rel_val_acc".into()],
        );
        for c in &self.cells {
            t.push(
                vec![self.variant.clone(), c.value.to_string()],
                vec![c.max_rel_val_acc, c.mean_rel_val_acc],
            );
        }
        t
    }

    pub fn failures(&self) -> impl Iterator<Item = &AblationCell> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

/// Run `base` once per axis value, every seed, sharing data and reference
/// accuracy. A failing cell is recorded and the sweep continues.
pub fn run_ablation_matrix(base: &ExperimentConfig, axis: AblationAxis, values: &[f64]) -> Result<AblationMatrix> {
    base.validate()?;
    let data = prepare_data(base)?;
    run_ablation_on(base, &data, axis, values)
}

/// [`run_ablation_matrix`] over already prepared data.
pub fn run_ablation_on(
    base: &ExperimentConfig,
    data: &PreparedData,
    axis: AblationAxis,
    values: &[f64],
) -> Result<AblationMatrix> {
    let mut base = base.clone();
    let reference = reference_accuracy(&base, data)?;
    base.centralized.reference_accuracy = Some(reference);
    let mut cells = Vec::with_capacity(values.len());
    for &value in values {
        let outcome = axis.apply(&base, value).and_then(|c| {
            let dir = c.output_dir.clone();
            run_experiment_on(&c, data).map(|o| (dir, o))
        });
        cells.push(match outcome {
            Ok((dir, o)) => {
                let sums: Vec<_> = o.runs.iter().filter_map(|r| r.summary.summary.clone()).collect();
                let n = sums.len() as f64;
                let avg = |f: fn(&crate::fed::TraceSummary) -> f64| {
                    (!sums.is_empty()).then(|| sums.iter().map(f).sum::<f64>() / n)
                };
                AblationCell {
                    value,
                    dir,
                    max_rel_val_acc: avg(|s| s.max_rel_val_acc),
                    mean_rel_val_acc: avg(|s| s.mean_rel_val_acc),
                    seeds: o.runs.len(),
                    error: None,
                }
            }
            Err(e) => AblationCell {
                value,
                dir: base.output_dir.join(format!("{}={value}", axis.name())),
                max_rel_val_acc: None,
                mean_rel_val_acc: None,
                seeds: 0,
                error: Some(e.to_string()),
            },
        });
    }
    let matrix = AblationMatrix {
        axis,
        variant: format!("{:?}", base.variant.kind).to_lowercase(),
        reference_accuracy: reference,
        cells,
    };
    std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    let stem = format!("ablation_{}", axis.name());
    let csv = base.output_dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, matrix.table().to_csv()).map_err(|e| Error::io(&csv, e))?;
    let json = base.output_dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(&matrix).expect("serializable"))
        .map_err(|e| Error::io(&json, e))?;
    Ok(matrix)
}
