//! Experiment orchestration: TOML configuration, data preparation,
//! centralized reference runs, seeded federated families, ablation sweeps
//! and report emission. Every run writes its config hash next to its
//! artifacts so results can be traced back to the exact settings.

mod ablation;
mod config;
mod experiment;
mod pipeline;
mod report;
mod sweep;

pub use ablation::{run_ablation_matrix, run_ablation_on, AblationAxis, AblationCell, AblationMatrix};
pub use config::{
    validate_config, CentralizedConfig, DataSource, DatasetConfig, ExperimentConfig,
    GeneratorChoice, ModelConfig, NormChoice, Overrides, PartitionConfig, ReportConfig, RoundsConfig,
    RunMode, SyntheticConfig, VariantKind, VariantSection, CIFAR_DIR, DATA_ROOT_ENV,
};
pub use experiment::{
    reference_accuracy, run_dir, run_experiment, run_experiment_on, ExperimentOutcome,
    RunArtifacts, RunSummary, BEST_WEIGHTS_FILE, CONFIG_FILE, FINAL_WEIGHTS_FILE, REFERENCE_FILE,
    SUMMARY_FILE, TRACE_FILE,
};
pub use pipeline::{
    build_generator, build_variant, classifier_spec, prepare_data, provenance, run_centralized,
    CentralizedRun, PreparedData,
};
pub use report::{checkpoint_table, emit_report, trace_table, traces_svg, ReportOutcome, ReportRow, ReportTable};
pub use sweep::{run_preprocessing_sweep, SweepCell, SweepResult};
