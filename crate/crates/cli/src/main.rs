//! `fedos`: run centralized baselines, federated experiments and ablations,
//! emit reports, pre-train generators and inspect partitions.
//!
//! Success prints one JSON object on stdout. Failure prints one JSON object
//! with `"status":"error"` on stderr and exits with 2 for configuration or
//! usage errors, 1 otherwise.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedos_core::data::{dirichlet_partition, load_raw_images, write_histogram_sidecar, write_partition};
use fedos_core::fedos::train_generator;
use fedos_core::harness::{
    classifier_spec, emit_report, prepare_data, run_ablation_matrix, run_experiment,
    validate_config, AblationAxis, ExperimentConfig, Overrides, RunMode, VariantKind, CIFAR_DIR,
    DATA_ROOT_ENV,
};
use fedos_core::Error;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "fedos", version, about = "Deterministic federated-learning simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Directory containing `cifar-10-batches-bin`.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    /// Overrides `partition.alpha`.
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Overrides `rounds.rounds` (epochs for `centralized`).
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// Overrides `variant.kind`.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Replaces the seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir` (the report or checkpoint destination for
    /// `report` and `gan-train`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Centralized SGD baseline; records the reference accuracy.
    Centralized,
    /// Federated training for every configured seed.
    Federated,
    /// One federated family per value of a single hyperparameter.
    Ablation {
        /// alpha, local_epochs, client_fraction, w_u or f_u.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Tables and charts from finished runs.
    Report {
        /// Root searched for run summaries; the config's output_dir when omitted.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Adversarially train a TinyGan and save its checkpoint.
    GanTrain {
        /// Folder of raw 3×H×W byte records; the training split when omitted.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Partition the training split and write it with a histogram sidecar.
    PartitionInspect,
    /// Print the normalized config and its hash.
    Validate,
}

struct Failure {
    kind: &'static str,
    path: Option<String>,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let path = match &e {
            Error::Config { path, .. } => Some(path.clone()),
            _ => None,
        };
        Failure {
            kind: e.kind(),
            path,
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self.kind {
            "config" | "usage" | "argument" => 2,
            _ => 1,
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => validate_config(p)?,
        None => ExperimentConfig::default(),
    };
    let variant = common.variant.as_deref().map(VariantKind::parse).transpose()?;
    cfg.apply(&Overrides {
        alpha: common.alpha,
        rounds: common.rounds,
        variant,
        seed: common.seed,
        output_dir: None,
    })?;
    if cfg.dataset.path.is_none() {
        if let Some(root) = &common.data_root {
            cfg.dataset.path = Some(root.join(CIFAR_DIR));
        }
    }
    Ok(cfg)
}

fn with_output(mut cfg: ExperimentConfig, out: &Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    if let Some(o) = out {
        cfg.apply(&Overrides {
            output_dir: Some(o.clone()),
            ..Overrides::default()
        })?;
    }
    Ok(cfg)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: Cli) -> Result<Value, Failure> {
    let c = &cli.common;
    let cfg = load_config(c)?;
    match cli.verb {
        Verb::Validate => Ok(json!({
            "config_hash": cfg.hash(),
            "normalized": cfg.normalized(),
        })),
        Verb::Centralized | Verb::Federated => {
            let mut cfg = with_output(cfg, &c.out)?;
            if matches!(cli.verb, Verb::Centralized) {
                cfg.mode = RunMode::Centralized;
                if let Some(r) = c.rounds {
                    cfg.centralized.epochs = r;
                }
            } else {
                cfg.mode = RunMode::Federated;
            }
            let out = run_experiment(&cfg)?;
            let runs: Vec<Value> = out
                .runs
                .iter()
                .map(|r| {
                    json!({
                        "seed": r.summary.seed,
                        "dir": path_str(&r.dir),
                        "summary": r.summary.summary,
                    })
                })
                .collect();
            Ok(json!({
                "config_hash": cfg.hash(),
                "reference_accuracy": out.reference_accuracy,
                "runs": runs,
            }))
        }
        Verb::Ablation { axis, values } => {
            let cfg = with_output(cfg, &c.out)?;
            let axis = AblationAxis::parse(&axis)?;
            let m = run_ablation_matrix(&cfg, axis, &values)?;
            let failed = m.failures().count();
            Ok(json!({
                "config_hash": cfg.hash(),
                "axis": axis.name(),
                "reference_accuracy": m.reference_accuracy,
                "cells": m.cells,
                "failed_cells": failed,
            }))
        }
        Verb::Report { runs } => {
            let root = runs.unwrap_or_else(|| cfg.output_dir.clone());
            let dest = c.out.clone().unwrap_or_else(|| root.join("report"));
            let outcome = emit_report(&root, &dest)?;
            Ok(serde_json::to_value(outcome).expect("serializable"))
        }
        Verb::GanTrain { pool, epochs } => {
            let mut cfg = cfg;
            if let Some(e) = epochs {
                cfg.gan.epochs = e;
            }
            let (pool_ds, classifier) = match &pool {
                Some(dir) => {
                    let s = &cfg.dataset.synthetic;
                    let ds = load_raw_images(dir, s.height, s.width)?;
                    let spec = fedos_core::ModelSpec::lenet5(
                        s.height,
                        s.width,
                        s.classes,
                        &cfg.model.norm_kind(),
                        true,
                    )?;
                    (ds, spec)
                }
                None => {
                    let data = prepare_data(&cfg)?;
                    let spec = classifier_spec(&cfg, &data, true)?;
                    (data.raw_train, spec)
                }
            };
            let training = train_generator(&pool_ds, &cfg.gan)?;
            training.generator.check_size(&classifier)?;
            let dest = c.out.clone().unwrap_or_else(|| cfg.output_dir.join("generator.fsw"));
            if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Failure {
                    kind: "io",
                    path: None,
                    message: format!("{}: {e}", parent.display()),
                })?;
            }
            training.generator.save(&dest)?;
            Ok(json!({
                "checkpoint": path_str(&dest),
                "pool_images": pool_ds.len(),
                "generator_parameters": training.generator.parameter_count()?,
                "classifier_parameters": classifier.network.parameter_count()?,
                "d_losses": training.d_losses,
                "g_losses": training.g_losses,
            }))
        }
        Verb::PartitionInspect => {
            let cfg = with_output(cfg, &c.out)?;
            let data = prepare_data(&cfg)?;
            let mut seeds = Vec::new();
            for &seed in &cfg.seeds {
                let p = dirichlet_partition(&data.train, &cfg.partition.spec(seed))?;
                let dir = cfg.output_dir.join(format!("partition_alpha{}_seed{seed}", cfg.partition.alpha));
                std::fs::create_dir_all(&dir).map_err(|e| Failure {
                    kind: "io",
                    path: None,
                    message: format!("{}: {e}", dir.display()),
                })?;
                write_partition(&p, &dir.join("partition.fsp"))?;
                write_histogram_sidecar(&p, &dir.join("partition.json"))?;
                seeds.push(json!({
                    "seed": seed,
                    "dir": path_str(&dir),
                    "dominant_share": (0..p.n_clients()).map(|k| p.dominant_share(k)).collect::<Vec<_>>(),
                    "entropy": (0..p.n_clients()).map(|k| p.entropy(k)).collect::<Vec<_>>(),
                    "histograms": p.histograms,
                }));
            }
            Ok(json!({ "alpha": cfg.partition.alpha, "partitions": seeds }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let f = Failure {
                kind: "usage",
                path: None,
                message: e.to_string().lines().next().unwrap_or_default().to_string(),
            };
            return fail(f);
        }
    };
    match run(cli) {
        Ok(mut v) => {
            if let Value::Object(m) = &mut v {
                m.insert("status".into(), json!("ok"));
            }
            // a closed stdout (e.g. piped into `head`) is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{v}");
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    let line = json!({
        "status": "error",
        "kind": f.kind,
        "path": f.path,
        "message": f.message,
    });
    let _ = writeln!(std::io::stderr(), "{line}");
    ExitCode::from(f.exit_code())
}
