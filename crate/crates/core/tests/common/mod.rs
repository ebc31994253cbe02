//! Test-only oracles, independent of the code paths they check.
#![allow(dead_code)]

use fedos_core::nn::{LayerSpec, Mode, Network, Real, Tensor, WeightSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, seed: u64, scale: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-scale..scale)).collect()).unwrap()
}

/// Scalar objective `Σ probe·output` of a train-mode forward pass.
pub fn probe_objective(
    net: &Network,
    weights: &WeightSet<f64>,
    input: &Tensor<f64>,
    probe: &[f64],
) -> f64 {
    let out = net.forward(weights, input, Mode::Train).unwrap().output;
    out.data().iter().zip(probe).map(|(a, b)| a * b).sum()
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖, 1e-5)`. The floor
/// covers gradients that are exactly zero in theory (a conv bias feeding a
/// batch norm), where finite differences only see round-off (up to ~1e-9 on LeNet-5).
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    diff / scale.max(1e-5)
}

pub struct GradReport {
    /// (tensor name, relative error)
    pub params: Vec<(String, f64)>,
    pub input: f64,
    /// Coordinates left out because they straddle a ReLU kink.
    pub skipped: usize,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.1)
            .fold(self.input, f64::max)
    }
}

/// Sign of every ReLU and leaky-ReLU input, found by running the layer
/// prefix that ends just before each one.
pub fn kink_signature(net: &Network, weights: &WeightSet<f64>, input: &Tensor<f64>) -> Vec<bool> {
    let mut signs = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        if !matches!(layer, LayerSpec::Relu | LayerSpec::LeakyRelu { .. }) {
            continue;
        }
        let prefix = Network::new(net.input_shape.clone(), net.layers[..i].to_vec());
        let entries = weights
            .entries()
            .iter()
            .filter(|e| {
                let idx: usize = e.name[1..e.name.find('.').unwrap()].parse().unwrap();
                idx < i
            })
            .cloned()
            .collect();
        let out = prefix.forward(&WeightSet::new(entries), input, Mode::Train).unwrap().output;
        signs.extend(out.data().iter().map(|v| *v > 0.0));
    }
    signs
}

/// Central finite differences with step `h`, compared with the analytic
/// backward pass, over every trainable scalar and every input scalar (or a
/// random sample of them). A coordinate whose `±h` perturbation flips the
/// sign of any ReLU input straddles a kink, where the difference quotient
/// is not a derivative; such coordinates are skipped and counted.
pub fn finite_difference_check(
    net: &Network,
    weights: &WeightSet<f64>,
    input: &Tensor<f64>,
    seed: u64,
    h: f64,
    max_coords_per_tensor: Option<usize>,
) -> GradReport {
    let pass = net.forward(weights, input, Mode::Train).unwrap();
    let probe: Vec<f64> = {
        let mut r = rng(seed ^ 0xABCD);
        (0..pass.output.len()).map(|_| r.random_range(-1.0..1.0)).collect()
    };
    let dout = Tensor::new(pass.output.shape().to_vec(), probe.clone()).unwrap();
    let (grads, dinput) = net.backward(weights, &pass, &dout, true).unwrap();
    let dinput = dinput.unwrap();

    let mut pick = rng(seed ^ 0x1234);
    let mut skipped = 0;
    // coordinates to try, in order; sampled mode keeps drawing until it has
    // `m` smooth ones or gives up after 20·m attempts
    let mut candidates = |n: usize, pick: &mut ChaCha8Rng| -> (Vec<usize>, usize) {
        match max_coords_per_tensor {
            Some(m) if m < n => ((0..20 * m).map(|_| pick.random_range(0..n)).collect(), m),
            _ => ((0..n).collect(), n),
        }
    };

    let mut params = Vec::new();
    for (ti, entry) in weights.entries().iter().enumerate() {
        if !entry.trainable {
            continue;
        }
        let (coords, want) = candidates(entry.tensor.len(), &mut pick);
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &c in &coords {
            if analytic.len() == want {
                break;
            }
            let mut plus = weights.clone();
            plus.entries_mut()[ti].tensor.data_mut()[c] += h;
            let mut minus = weights.clone();
            minus.entries_mut()[ti].tensor.data_mut()[c] -= h;
            if kink_signature(net, &plus, input) != kink_signature(net, &minus, input) {
                skipped += 1;
                continue;
            }
            let num = (probe_objective(net, &plus, input, &probe)
                - probe_objective(net, &minus, input, &probe))
                / (2.0 * h);
            numeric.push(num);
            analytic.push(grads.tensors[ti].data()[c]);
        }
        params.push((entry.name.clone(), relative_error(&analytic, &numeric)));
    }

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let (coords, want) = candidates(input.len(), &mut pick);
    for c in coords {
        if analytic.len() == want {
            break;
        }
        let mut plus = input.clone();
        plus.data_mut()[c] += h;
        let mut minus = input.clone();
        minus.data_mut()[c] -= h;
        if kink_signature(net, weights, &plus) != kink_signature(net, weights, &minus) {
            skipped += 1;
            continue;
        }
        numeric.push(
            (probe_objective(net, weights, &plus, &probe)
                - probe_objective(net, weights, &minus, &probe))
                / (2.0 * h),
        );
        analytic.push(dinput.data()[c]);
    }
    GradReport {
        params,
        input: relative_error(&analytic, &numeric),
        skipped,
    }
}

/// Randomise every trainable tensor (including norm affine parameters) so
/// that no gradient is trivially structured.
pub fn randomize<T: Real>(weights: &mut WeightSet<T>, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for e in weights.entries_mut() {
        if !e.trainable {
            continue;
        }
        let is_scale = e.name.ends_with(".scale");
        for v in e.tensor.data_mut() {
            let d: f64 = r.random_range(-scale..scale);
            *v = T::of(if is_scale { 1.0 + d } else { d });
        }
    }
}

/// Conv (padded and unpadded), batch norm, group norm, ReLU, pooling,
/// flatten and dense.
pub fn conv_net() -> Network {
    Network::new(
        vec![3, 8, 8],
        vec![
            LayerSpec::Conv2d { out_channels: 4, kernel: 3, padding: 1 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::AvgPool2d { size: 2 },
            LayerSpec::Conv2d { out_channels: 6, kernel: 3, padding: 0 },
            LayerSpec::GroupNorm { groups: 3 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { out_features: 4 },
        ],
    )
}

/// Generator-style stack: dense, rank-2 batch norm, tanh, reshape,
/// upsampling, leaky ReLU and sigmoid.
pub fn upsampling_net() -> Network {
    Network::new(
        vec![6],
        vec![
            LayerSpec::Dense { out_features: 8 },
            LayerSpec::BatchNorm,
            LayerSpec::Tanh,
            LayerSpec::Reshape { shape: vec![2, 2, 2] },
            LayerSpec::Upsample2d { factor: 2 },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Conv2d { out_channels: 3, kernel: 3, padding: 1 },
            LayerSpec::GroupNorm { groups: 1 },
            LayerSpec::Sigmoid,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 3 },
        ],
    )
}

pub mod fixtures {
    use fedos_core::data::{
        partition_labels, preprocess, synthesize_dataset, Dataset, PartitionSpec, Preprocessing,
    };
    use fedos_core::fed::{epoch_order, ClientState};
    use fedos_core::nn::{self, LayerSpec, ModelSpec, Network, NormKind, Real, WeightSet};

    /// One conv stage and a linear head over 3×8×8 inputs.
    pub fn tiny_spec(k: usize, unknown_head: bool, norm: NormKind) -> ModelSpec {
        let mut layers = vec![LayerSpec::Conv2d {
            out_channels: 4,
            kernel: 3,
            padding: 1,
        }];
        match norm {
            NormKind::None => {}
            NormKind::Batch => layers.push(LayerSpec::BatchNorm),
            NormKind::Group(_) => layers.push(LayerSpec::GroupNorm { groups: 2 }),
        }
        layers.extend([
            LayerSpec::Relu,
            LayerSpec::AvgPool2d { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                out_features: k + usize::from(unknown_head),
            },
        ]);
        ModelSpec {
            network: Network::new(vec![3, 8, 8], layers),
            num_known_classes: k,
            has_unknown_head: unknown_head,
        }
    }

    /// Standardized synthetic train/val splits of 8×8 images.
    pub fn synthetic_splits(k: usize, n_train: usize, n_val: usize, seed: u64) -> (Dataset, Dataset) {
        let raw = synthesize_dataset(k, n_train + n_val, 8, 8, seed).unwrap();
        let frac = n_val as f64 / (n_train + n_val) as f64;
        let (train, val) = raw.split_validation(frac, seed).unwrap();
        let train = preprocess(&train, Preprocessing::Standardized, None).unwrap();
        let stats = train.preprocessor().stats.clone().unwrap();
        let val = preprocess(&val, Preprocessing::Standardized, Some(&stats)).unwrap();
        (train, val)
    }

    pub fn dirichlet_clients(train: &Dataset, n: usize, per_client: usize, alpha: f64, seed: u64) -> Vec<ClientState> {
        let spec = PartitionSpec {
            n_clients: n,
            alpha,
            samples_per_client: per_client,
            seed,
        };
        let p = partition_labels(train.labels(), train.class_count(), &spec).unwrap();
        ClientState::from_partition(&p, train).unwrap()
    }

    /// Plain minibatch SGD over `train` in the order a lone client 0 would
    /// visit it at round `epoch + 1`: the centralized oracle.
    pub fn centralized_sgd<T: Real>(
        spec: &ModelSpec,
        init: &WeightSet<T>,
        train: &Dataset,
        epochs: usize,
        batch: usize,
        lr: f64,
        seed: u64,
    ) -> Vec<WeightSet<T>> {
        let ones = vec![T::one(); spec.output_dim()];
        let mut w = init.clone();
        let mut per_epoch = Vec::new();
        for e in 0..epochs {
            let order = epoch_order(seed, e + 1, 0, 0, train.len());
            for chunk in order.chunks(batch) {
                let b = train.batch::<T>(chunk);
                let (_, g) = nn::backward(spec, &w, &b, &ones).unwrap();
                nn::sgd_step(&mut w, &g, T::of(lr)).unwrap();
            }
            per_epoch.push(w.clone());
        }
        per_epoch
    }
}
