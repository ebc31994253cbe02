use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{dirichlet_partition, write_histogram_sidecar, write_partition};
use crate::error::{Error, Result};
use crate::fed::{run_training, Checkpoint, ClientState, Federation, RunOptions, TraceSummary};
use crate::harness::config::{ExperimentConfig, RunMode, VariantKind};
use crate::harness::pipeline::{
    build_variant, check_reference, classifier_spec, prepare_data, provenance, run_centralized,
    PreparedData,
};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BEST_WEIGHTS_FILE: &str = "best.fsw";
pub const FINAL_WEIGHTS_FILE: &str = "final.fsw";
pub const REFERENCE_FILE: &str = "reference.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Machine-readable record of one seed's run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub mode: RunMode,
    pub variant: String,
    pub alpha: f64,
    pub seed: u64,
    pub reference_accuracy: f64,
    pub summary: Option<TraceSummary>,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunSummary {
    pub fn read(path: &Path) -> Result<RunSummary> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub summary: RunSummary,
}

impl RunArtifacts {
    pub fn trace_path(&self) -> PathBuf {
        self.dir.join(TRACE_FILE)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub reference_accuracy: f64,
    pub runs: Vec<RunArtifacts>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceRecord {
    config_hash: String,
    seed: u64,
    epochs: usize,
    reference_accuracy: f64,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Directory of one seed's artifacts under the output root.
pub fn run_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    let tag = match cfg.mode {
        RunMode::Centralized => "centralized".to_string(),
        RunMode::Federated => format!("{:?}", cfg.variant.kind).to_lowercase(),
    };
    cfg.output_dir.join(format!("{tag}_alpha{}_seed{seed}", cfg.partition.alpha))
}

/// Reference accuracy: the configured value, else a centralized run on the
/// first seed, recorded in `reference.json`.
pub fn reference_accuracy(cfg: &ExperimentConfig, data: &PreparedData) -> Result<f64> {
    if let Some(a) = cfg.centralized.reference_accuracy {
        return check_reference(a);
    }
    let seed = cfg.seeds[0];
    let run = run_centralized(cfg, data, seed)?;
    let acc = check_reference(run.reference_accuracy)?;
    create_dir(&cfg.output_dir)?;
    write_json(
        &ReferenceRecord {
            config_hash: cfg.hash(),
            seed,
            epochs: cfg.centralized.epochs,
            reference_accuracy: acc,
        },
        &cfg.output_dir.join(REFERENCE_FILE),
    )?;
    Ok(acc)
}

/// Run every seed of the configured family and write its artifacts:
/// `trace.csv`, `summary.json`, `best.fsw` and `final.fsw` per seed, plus
/// the partition and its histogram sidecar for federated runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    run_experiment_on(cfg, &data)
}

/// [`run_experiment`] over already prepared data.
pub fn run_experiment_on(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join(CONFIG_FILE), cfg.normalized())
        .map_err(|e| Error::io(&cfg.output_dir, e))?;
    match cfg.mode {
        RunMode::Centralized => centralized_family(cfg, data),
        RunMode::Federated => federated_family(cfg, data),
    }
}

fn centralized_family(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutcome> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let run = run_centralized(cfg, data, seed)?;
        let dir = run_dir(cfg, seed);
        create_dir(&dir)?;
        run.trace.write_csv(&dir.join(TRACE_FILE))?;
        let meta = weight_meta(cfg, seed);
        run.best.save(&dir.join(BEST_WEIGHTS_FILE), &meta)?;
        run.last.save(&dir.join(FINAL_WEIGHTS_FILE), &meta)?;
        let summary = RunSummary {
            config_hash: cfg.hash(),
            mode: RunMode::Centralized,
            variant: "centralized".into(),
            alpha: cfg.partition.alpha,
            seed,
            reference_accuracy: run.reference_accuracy,
            summary: run.trace.summary(),
            checkpoints: Vec::new(),
        };
        write_json(&summary, &dir.join(SUMMARY_FILE))?;
        runs.push(RunArtifacts { dir, summary });
    }
    let reference_accuracy = runs[0].summary.reference_accuracy;
    Ok(ExperimentOutcome { reference_accuracy, runs })
}

fn weight_meta(cfg: &ExperimentConfig, seed: u64) -> Vec<(String, String)> {
    vec![
        ("config_hash".into(), cfg.hash()),
        ("seed".into(), seed.to_string()),
        ("norm".into(), cfg.model.norm_kind().tag().into()),
    ]
}

fn federated_family(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutcome> {
    let reference = reference_accuracy(cfg, data)?;
    let spec = classifier_spec(cfg, data, cfg.variant.kind == VariantKind::Fedos)?;
    let variant = build_variant(cfg, data, &spec)?;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let dir = run_dir(cfg, seed);
        create_dir(&dir)?;
        let partition = dirichlet_partition(&data.train, &cfg.partition.spec(seed))?;
        write_partition(&partition, &dir.join("partition.fsp"))?;
        write_histogram_sidecar(&partition, &dir.join("partition.json"))?;
        let federation = Federation {
            train: &data.train,
            val: &data.val,
            test: Some(&data.test),
            clients: ClientState::from_partition(&partition, &data.train)?,
        };
        let mut opts = RunOptions::new(reference, cfg.partition.alpha);
        opts.checkpoints = cfg.report.checkpoints.clone();
        opts.header = provenance(cfg);
        let rc = cfg.rounds.round_config(seed);
        let (state, trace) = run_training::<f32>(&spec, &federation, &rc, &variant, opts)?;
        trace.write_csv(&dir.join(TRACE_FILE))?;
        let meta = weight_meta(cfg, seed);
        let best = state.best.as_ref().map_or(&state.weights, |b| &b.weights);
        best.save(&dir.join(BEST_WEIGHTS_FILE), &meta)?;
        state.weights.save(&dir.join(FINAL_WEIGHTS_FILE), &meta)?;
        let summary = RunSummary {
            config_hash: cfg.hash(),
            mode: RunMode::Federated,
            variant: trace.variant.clone(),
            alpha: cfg.partition.alpha,
            seed,
            reference_accuracy: reference,
            summary: trace.summary(),
            checkpoints: trace.checkpoints.clone(),
        };
        write_json(&summary, &dir.join(SUMMARY_FILE))?;
        runs.push(RunArtifacts { dir, summary });
    }
    Ok(ExperimentOutcome {
        reference_accuracy: reference,
        runs,
    })
}
