use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PartitionSpec, Preprocessing};
use crate::error::{Error, Result};
use crate::fed::RoundConfig;
use crate::fedos::GanSpec;
use crate::nn::NormKind;

/// Environment variable naming the directory that holds `cifar-10-batches-bin`.
pub const DATA_ROOT_ENV: &str = "FEDOS_DATA_ROOT";
pub const CIFAR_DIR: &str = "cifar-10-batches-bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Centralized,
    #[default]
    Federated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Cifar10,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 10,
            height: 32,
            width: 32,
            train_samples: 5000,
            test_samples: 1000,
            amplitude: 60.0,
            noise: 70.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// CIFAR directory; `$FEDOS_DATA_ROOT/cifar-10-batches-bin` when absent.
    pub path: Option<PathBuf>,
    /// Random subset of the training split taken before the validation
    /// carve-out; 0 keeps everything.
    pub train_subset: usize,
    pub test_subset: usize,
    pub val_fraction: f64,
    pub preprocessing: Preprocessing,
    /// Seed of subsetting and the validation split, shared by all runs.
    pub seed: u64,
    pub synthetic: SyntheticConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DataSource::Cifar10,
            path: None,
            train_subset: 0,
            test_subset: 0,
            val_fraction: 0.1,
            preprocessing: Preprocessing::Standardized,
            seed: 0,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    #[default]
    None,
    Batch,
    Group,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub norm: NormChoice,
    /// Group counts of the three conv layers for group norm.
    pub groups: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            norm: NormChoice::None,
            groups: vec![2, 4, 30],
        }
    }
}

impl ModelConfig {
    pub fn norm_kind(&self) -> NormKind {
        match self.norm {
            NormChoice::None => NormKind::None,
            NormChoice::Batch => NormKind::Batch,
            NormChoice::Group => NormKind::Group(self.groups.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub n_clients: usize,
    pub alpha: f64,
    pub samples_per_client: usize,
    /// Partition seed; the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            n_clients: 20,
            alpha: 1.0,
            samples_per_client: 2000,
            seed: None,
        }
    }
}

impl PartitionConfig {
    pub fn spec(&self, run_seed: u64) -> PartitionSpec {
        PartitionSpec {
            n_clients: self.n_clients,
            alpha: self.alpha,
            samples_per_client: self.samples_per_client,
            seed: self.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundsConfig {
    pub rounds: usize,
    pub client_fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub parallel: bool,
}

impl Default for RoundsConfig {
    fn default() -> Self {
        RoundsConfig {
            rounds: 120,
            client_fraction: 0.2,
            local_epochs: 1,
            batch_size: 32,
            lr: 0.1,
            parallel: true,
        }
    }
}

impl RoundsConfig {
    pub fn round_config(&self, seed: u64) -> RoundConfig {
        RoundConfig {
            rounds: self.rounds,
            client_fraction: self.client_fraction,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed,
            parallel: self.parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    #[default]
    Fedavg,
    Fedprox,
    Fedir,
    Fedos,
}

impl VariantKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(VariantKind::Fedavg),
            "fedprox" => Ok(VariantKind::Fedprox),
            "fedir" => Ok(VariantKind::Fedir),
            "fedos" => Ok(VariantKind::Fedos),
            _ => Err(Error::Config {
                path: "variant.kind".into(),
                message: format!("unknown variant `{s}` (fedavg, fedprox, fedir, fedos)"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorChoice {
    Noise,
    #[default]
    GaussianFit,
    TinyGan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantSection {
    pub kind: VariantKind,
    pub mu: f64,
    pub smoothing: f64,
    pub w_u: f64,
    pub f_u: f64,
    pub generator: GeneratorChoice,
    /// TinyGan checkpoint to load; trained on the pool when absent.
    pub generator_path: Option<PathBuf>,
    /// Folder of raw RGB records the generator is fitted to; the training
    /// split when absent.
    pub pool_path: Option<PathBuf>,
    pub resample_per_epoch: bool,
}

impl Default for VariantSection {
    fn default() -> Self {
        VariantSection {
            kind: VariantKind::Fedavg,
            mu: 1.0,
            smoothing: 1.0,
            w_u: 1.0,
            f_u: 0.6,
            generator: GeneratorChoice::GaussianFit,
            generator_path: None,
            pool_path: None,
            resample_per_epoch: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralizedConfig {
    pub epochs: usize,
    /// Fixed reference accuracy in (0, 1]; computed by a centralized run
    /// when absent.
    pub reference_accuracy: Option<f64>,
}

impl Default for CentralizedConfig {
    fn default() -> Self {
        CentralizedConfig {
            epochs: 120,
            reference_accuracy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Rounds at which the best-validation weights are scored on test data.
    pub checkpoints: Vec<usize>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            checkpoints: vec![125, 250, 375, 500],
        }
    }
}

/// Complete description of an experiment family. Every field has a default
/// matching the baseline federated setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub partition: PartitionConfig,
    pub rounds: RoundsConfig,
    pub variant: VariantSection,
    pub centralized: CentralizedConfig,
    pub report: ReportConfig,
    pub gan: GanSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: RunMode::Federated,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            partition: PartitionConfig::default(),
            rounds: RoundsConfig::default(),
            variant: VariantSection::default(),
            centralized: CentralizedConfig::default(),
            report: ReportConfig::default(),
            gan: GanSpec::default(),
        }
    }
}

/// Command-line overrides of individual keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub rounds: Option<usize>,
    pub variant: Option<VariantKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn constraint(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn check(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(constraint(path, message))
    }
}

impl ExperimentConfig {
    /// Parse TOML text; unknown keys and type errors report their key path.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let de = toml::Deserializer::parse(text).map_err(|e| constraint("", e.message().to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            constraint(if path == "." { "" } else { &path }, e.inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(a) = o.alpha {
            self.partition.alpha = a;
        }
        if let Some(r) = o.rounds {
            self.rounds.rounds = r;
        }
        if let Some(v) = o.variant {
            self.variant.kind = v;
        }
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        self.validate()
    }

    /// Constraint checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let p = &self.partition;
        check(p.alpha.is_finite() && p.alpha > 0.0, "partition.alpha", "must be a positive finite number")?;
        check(p.n_clients > 0, "partition.n_clients", "must be positive")?;
        check(p.samples_per_client > 0, "partition.samples_per_client", "must be positive")?;
        let r = &self.rounds;
        check(r.client_fraction > 0.0 && r.client_fraction <= 1.0, "rounds.client_fraction", "must lie in (0, 1]")?;
        check(r.local_epochs > 0, "rounds.local_epochs", "must be positive")?;
        check(r.batch_size > 0, "rounds.batch_size", "must be positive")?;
        check(r.lr.is_finite() && r.lr >= 0.0, "rounds.lr", "must be a non-negative number")?;
        let v = &self.variant;
        check(v.mu.is_finite() && v.mu >= 0.0, "variant.mu", "must be >= 0")?;
        check(v.smoothing.is_finite() && v.smoothing >= 0.0, "variant.smoothing", "must be >= 0")?;
        check(v.w_u.is_finite() && v.w_u >= 0.0, "variant.w_u", "must be >= 0")?;
        check(v.f_u.is_finite() && v.f_u >= 0.0, "variant.f_u", "must be >= 0")?;
        let d = &self.dataset;
        check(d.val_fraction > 0.0 && d.val_fraction < 1.0, "dataset.val_fraction", "must lie in (0, 1)")?;
        if d.source == DataSource::Synthetic {
            let s = &d.synthetic;
            check(s.classes > 1, "dataset.synthetic.classes", "needs at least two classes")?;
            check(s.train_samples > 0 && s.test_samples > 0, "dataset.synthetic.train_samples", "sample counts must be positive")?;
            check(s.height >= 32 && s.width >= 32, "dataset.synthetic.height", "LeNet-5 needs images of at least 32x32")?;
        }
        if self.model.norm == NormChoice::Group {
            check(self.model.groups.len() == 3, "model.groups", "needs one group count per conv layer")?;
        }
        check(!self.seeds.is_empty(), "seeds", "needs at least one seed")?;
        if let Some(a) = self.centralized.reference_accuracy {
            check(a > 0.0 && a <= 1.0, "centralized.reference_accuracy", "must lie in (0, 1]")?;
        }
        for (key, path) in [
            ("dataset.path", &d.path),
            ("variant.generator_path", &v.generator_path),
            ("variant.pool_path", &v.pool_path),
        ] {
            if let Some(path) = path {
                check(path.exists(), key, &format!("{} does not exist", path.display()))?;
            }
        }
        Ok(())
    }

    /// Canonical TOML with every default filled in.
    pub fn normalized(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the normalized form. The output directory and the
    /// parallelism switch are left out: neither changes any result.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.rounds.parallel = true;
        let digest = Sha256::digest(c.normalized().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Directory holding the CIFAR batches.
    pub fn cifar_dir(&self) -> Result<PathBuf> {
        if let Some(p) = &self.dataset.path {
            return Ok(p.clone());
        }
        let root = std::env::var_os(DATA_ROOT_ENV).ok_or_else(|| {
            constraint(
                "dataset.path",
                format!("not set and ${DATA_ROOT_ENV} is undefined"),
            )
        })?;
        Ok(Path::new(&root).join(CIFAR_DIR))
    }
}

/// Read, default-fill and validate a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::parse(&text)
}
