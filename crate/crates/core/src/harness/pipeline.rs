use crate::data::{load_cifar10, load_raw_images, preprocess, Dataset, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fed::{run_training, ClientState, Federation, MetricTrace, RunOptions, Variant};
use crate::fedos::{train_generator, GaussianFit, Generator, TinyGan, UnknownConfig};
use crate::harness::config::{DataSource, ExperimentConfig, GeneratorChoice, VariantKind};
use crate::nn::{ModelSpec, WeightSet};

/// Splits ready for training. `raw_train` holds the same samples as `train`
/// before preprocessing; generators are fitted to it.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub raw_train: Dataset,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl PreparedData {
    pub fn class_count(&self) -> usize {
        self.train.class_count()
    }
}

/// Load, subset, carve off validation and preprocess with training-split
/// statistics.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let d = &cfg.dataset;
    let (train, test) = match d.source {
        DataSource::Cifar10 => load_cifar10(&cfg.cifar_dir()?)?,
        DataSource::Synthetic => {
            let s = &d.synthetic;
            let mut spec = SyntheticSpec::new(s.classes, s.train_samples, s.height, s.width, d.seed);
            spec.amplitude = s.amplitude;
            spec.noise = s.noise;
            let train = spec.generate(Split::Train)?;
            spec.samples = s.test_samples;
            (train, spec.generate(Split::Test)?)
        }
    };
    let train = if d.train_subset > 0 { train.random_subset(d.train_subset, d.seed)? } else { train };
    let test = if d.test_subset > 0 { test.random_subset(d.test_subset, d.seed)? } else { test };
    let (raw_train, raw_val) = train.split_validation(d.val_fraction, d.seed)?;
    let train = preprocess(&raw_train, d.preprocessing, None)?;
    let stats = train.preprocessor().stats.clone();
    let val = preprocess(&raw_val, d.preprocessing, stats.as_ref())?;
    let test = preprocess(&test, d.preprocessing, stats.as_ref())?;
    Ok(PreparedData { raw_train, train, val, test })
}

/// LeNet-5 sized for the prepared images.
pub fn classifier_spec(cfg: &ExperimentConfig, data: &PreparedData, unknown_head: bool) -> Result<ModelSpec> {
    let [_, h, w] = data.train.image_shape();
    ModelSpec::lenet5(h, w, data.class_count(), &cfg.model.norm_kind(), unknown_head)
}

/// Result of plain minibatch SGD over the whole training split.
#[derive(Clone, Debug)]
pub struct CentralizedRun {
    /// One record per epoch; `rel_val_acc` is the accuracy in percent.
    pub trace: MetricTrace,
    /// Validation accuracy after the last epoch.
    pub reference_accuracy: f64,
    pub best_val_acc: f64,
    pub best: WeightSet<f32>,
    pub last: WeightSet<f32>,
}

/// Centralized SGD with the federated optimiser settings: batch size and
/// learning rate from `rounds`, `centralized.epochs` passes. Epoch `e`
/// (1-based) visits samples in `epoch_order(seed, e, 0, 0, n)`.
pub fn run_centralized(cfg: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<CentralizedRun> {
    let spec = classifier_spec(cfg, data, false)?;
    let client = ClientState::new(0, (0..data.train.len()).collect(), &data.train)?;
    let federation = Federation {
        train: &data.train,
        val: &data.val,
        test: Some(&data.test),
        clients: vec![client],
    };
    // one client holding everything, selected every round, one local epoch
    let mut rc = cfg.rounds.round_config(seed);
    rc.rounds = cfg.centralized.epochs;
    rc.client_fraction = 1.0;
    rc.local_epochs = 1;
    rc.parallel = false;
    let mut opts = RunOptions::new(1.0, cfg.partition.alpha);
    opts.header = provenance(cfg);
    let (state, mut trace) = run_training::<f32>(&spec, &federation, &rc, &Variant::FedAvg, opts)?;
    trace.variant = "centralized".into();
    let reference_accuracy = match trace.records.last() {
        Some(r) => r.val_acc,
        None => crate::fed::evaluate(&spec, &state.weights, &data.val, false)?,
    };
    let (best, best_val_acc) = match state.best {
        Some(b) => (b.weights, b.val_acc),
        None => (state.weights.clone(), reference_accuracy),
    };
    Ok(CentralizedRun {
        trace,
        reference_accuracy,
        best_val_acc,
        best,
        last: state.weights,
    })
}

/// Provenance lines written at the top of every trace.
pub fn provenance(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    vec![
        ("config_hash".into(), cfg.hash()),
        ("source".into(), format!("{:?}", cfg.dataset.source).to_lowercase()),
        ("preprocessing".into(), cfg.dataset.preprocessing.tag().into()),
    ]
}

/// Unknown-class generator named by the config. Checkpoints are checked
/// against the classifier's size budget.
pub fn build_generator(cfg: &ExperimentConfig, data: &PreparedData, classifier: &ModelSpec) -> Result<Generator> {
    let v = &cfg.variant;
    let pool = || -> Result<Dataset> {
        match &v.pool_path {
            Some(p) => {
                let [_, h, w] = data.train.image_shape();
                load_raw_images(p, h, w)
            }
            None => Ok(data.raw_train.clone()),
        }
    };
    Ok(match v.generator {
        GeneratorChoice::Noise => Generator::Noise,
        GeneratorChoice::GaussianFit => Generator::GaussianFit(GaussianFit::fit(&pool()?)?),
        GeneratorChoice::TinyGan => {
            let gan = match &v.generator_path {
                Some(p) => TinyGan::load(p, Some(classifier))?,
                None => {
                    let g = train_generator(&pool()?, &cfg.gan)?.generator;
                    g.check_size(classifier)?;
                    g
                }
            };
            Generator::TinyGan(Box::new(gan))
        }
    })
}

/// Variant rule for the configured kind.
pub fn build_variant(cfg: &ExperimentConfig, data: &PreparedData, classifier: &ModelSpec) -> Result<Variant> {
    let v = &cfg.variant;
    Ok(match v.kind {
        VariantKind::Fedavg => Variant::FedAvg,
        VariantKind::Fedprox => Variant::FedProx { mu: v.mu },
        VariantKind::Fedir => Variant::FedIr { smoothing: v.smoothing },
        VariantKind::Fedos => {
            let mut u = UnknownConfig::new(v.w_u, v.f_u, build_generator(cfg, data, classifier)?);
            u.resample_per_epoch = v.resample_per_epoch;
            Variant::FedOs(u)
        }
    })
}

pub(crate) fn check_reference(acc: f64) -> Result<f64> {
    if acc > 0.0 && acc <= 1.0 {
        Ok(acc)
    } else {
        Err(Error::InvalidArgument(format!(
            "centralized reference accuracy {acc} is unusable; train longer"
        )))
    }
}
