mod common;

use common::fixtures::{dirichlet_clients, synthetic_splits, tiny_spec};
use fedos_core::data::{synthesize_dataset, Dataset, Split};
use fedos_core::fed::{local_train, LocalTask, RoundConfig, Variant};
use fedos_core::fedos::{
    attach_unknown_caches, fedos_loss_weights, generate_unknown, mask_unknown, train_generator,
    GanSpec, GaussianFit, Generator, TinyGan, UnknownConfig,
};
use fedos_core::nn::{argmax, cross_entropy, init_weights, Batch, ModelSpec, NormKind, Tensor};
use rand::Rng;

/// −log softmax(z)[y], computed directly.
fn nll(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

#[test]
fn unit_unknown_weight_is_plain_cross_entropy() {
    let mut r = common::rng(1);
    for _ in 0..20 {
        let logits: Vec<f64> = (0..6 * 5).map(|_| r.random_range(-4.0..4.0)).collect();
        let labels: Vec<usize> = (0..6).map(|_| r.random_range(0..5)).collect();
        let t = Tensor::new(vec![6, 5], logits.clone()).unwrap();
        let w = fedos_loss_weights(4, 1.0).unwrap();
        let (l, _) = cross_entropy(&t, &labels, &w).unwrap();
        let plain: f64 = (0..6).map(|i| nll(&logits[i * 5..i * 5 + 5], labels[i])).sum::<f64>() / 6.0;
        assert!((l - plain).abs() < 1e-12);
    }
}

#[test]
fn weighted_unknown_term_matches_group_sums() {
    let logits = vec![
        0.3, -1.2, 0.8, 2.0, //
        1.5, 0.2, -0.4, 0.1, //
        -0.7, 0.9, 0.0, 1.1, //
        0.4, 0.4, -2.0, -0.3,
    ];
    let labels = [0, 2, 3, 3];
    let t = Tensor::new(vec![4, 4], logits.clone()).unwrap();
    let (l, _) = cross_entropy(&t, &labels, &fedos_loss_weights(3, 1.5).unwrap()).unwrap();
    let row = |i: usize| &logits[i * 4..i * 4 + 4];
    let known = nll(row(0), 0) + nll(row(1), 2);
    let unknown = nll(row(2), 3) + nll(row(3), 3);
    // mean reduction: the batch size factor is the only difference
    assert!((4.0 * l - (known + 1.5 * unknown)).abs() < 1e-12);

    let (l0, g0) = cross_entropy(&t, &labels, &fedos_loss_weights(3, 0.0).unwrap()).unwrap();
    assert!((4.0 * l0 - known).abs() < 1e-12);
    assert!(g0.data()[8..].iter().all(|&g| g == 0.0));
}

#[test]
fn masking_is_argmax_of_the_truncated_vector() {
    let mut r = common::rng(2);
    for _ in 0..1000 {
        let k = r.random_range(1..12);
        let mut z: Vec<f64> = (0..=k).map(|_| r.random_range(-3.0..3.0)).collect();
        let truncated = argmax(&z[..k]);
        assert_eq!(mask_unknown(&z), truncated);
        z[k] = r.random_range(-1e6..1e6);
        assert_eq!(mask_unknown(&z), truncated);
    }
}

#[test]
fn caches_regenerate_from_seed_and_client() {
    let (train, _) = synthetic_splits(3, 120, 30, 1);
    let mut clients = dirichlet_clients(&train, 3, 40, 1.0, 1);
    let u = UnknownConfig::new(1.0, 0.8, Generator::GaussianFit(GaussianFit::fit(&synthesize_dataset(3, 50, 8, 8, 4).unwrap()).unwrap()));
    attach_unknown_caches(&mut clients, &u, 7, &train, 3).unwrap();
    let mut again = clients.clone();
    again.iter_mut().for_each(|c| c.unknown = None);
    attach_unknown_caches(&mut again, &u, 7, &train, 3).unwrap();
    assert_eq!(clients, again);
    let a = clients[0].unknown.as_ref().unwrap();
    assert_eq!(a.len(), 32);
    assert_ne!(a, clients[1].unknown.as_ref().unwrap());
    assert!(a.images.iter().all(|v| v.abs() < 10.0), "preprocessed like the training split");

    let big = UnknownConfig::new(1.0, 0.8, Generator::Noise);
    assert_eq!(big.unknown_count(2000), 1600);
}

#[test]
fn gaussian_fit_samples_match_the_fit() {
    let pool = synthesize_dataset(5, 400, 8, 8, 3).unwrap();
    let fit = GaussianFit::fit(&pool).unwrap();
    let like = Dataset::new(vec![0.0; 192], vec![0], [3, 8, 8], 1, Split::Train).unwrap();
    let n = 4000;
    let g = Generator::GaussianFit(fit.clone());
    let cache = generate_unknown(&g, n, 5, &like, 1).unwrap();
    let mut outside = 0;
    for j in 0..192 {
        let m: f64 = (0..n).map(|i| cache.image(i)[j] as f64).sum::<f64>() / n as f64;
        let bound = 3.0 * fit.std[j] as f64 / (n as f64).sqrt();
        // clamping to 0..=255 biases pixels whose fit sits near the range ends
        let near_edge = fit.mean[j] < 2.0 * fit.std[j] || fit.mean[j] > 255.0 - 2.0 * fit.std[j];
        if !near_edge && (m - fit.mean[j] as f64).abs() > bound {
            outside += 1;
        }
    }
    // 3σ: expect ~0.3% of 192 pixels outside by chance
    assert!(outside <= 3, "{outside} pixels outside 3σ/√n");
}

#[test]
fn unknown_class_is_learned() {
    let (train, val) = synthetic_splits(4, 400, 100, 2);
    let spec = tiny_spec(4, true, NormKind::None);
    let clients = dirichlet_clients(&train, 1, 400, 1.0, 1);
    let u = UnknownConfig::new(1.0, 0.6, Generator::Noise);
    let mut clients = clients;
    attach_unknown_caches(&mut clients, &u, 3, &train, 4).unwrap();
    let cfg = RoundConfig {
        rounds: 1,
        client_fraction: 1.0,
        local_epochs: 5,
        batch_size: 16,
        lr: 0.05,
        seed: 3,
        parallel: false,
    };
    let counts = clients[0].histogram.clone();
    let variant = Variant::FedOs(u.clone());
    let task = LocalTask { spec: &spec, train: &train, cfg: &cfg, variant: &variant, global_counts: &counts, round: 1 };
    let g = init_weights::<f32>(&spec.network, 3).unwrap();
    let out = local_train(&task, &g, &clients[0]).unwrap();
    assert_eq!(out.samples, 400);

    let held = generate_unknown(&u.generator, 200, 99, &val, 4).unwrap();
    let batch = Batch::<f32>::new(
        Tensor::new(vec![200, 3, 8, 8], held.images.clone()).unwrap(),
        vec![4; 200],
    )
    .unwrap();
    let logits = fedos_core::nn::forward(&spec, &out.weights, &batch, fedos_core::Mode::Eval).unwrap();
    let recall = (0..200).filter(|&i| argmax(logits.row(i)) == 4).count() as f64 / 200.0;
    assert!(recall > 0.5, "unknown recall {recall}");
}

fn tiny_gan_spec(epochs: usize) -> GanSpec {
    GanSpec {
        latent_dim: 8,
        generator_widths: [8, 6, 4],
        discriminator_widths: [4, 8],
        epochs,
        lr: 2e-3,
        batch_size: 16,
        seed: 1,
    }
}

fn lenet() -> ModelSpec {
    ModelSpec::lenet5(32, 32, 10, &NormKind::None, false).unwrap()
}

#[test]
fn zero_epochs_leave_the_generator_at_initialisation() {
    let pool = synthesize_dataset(3, 40, 8, 8, 1).unwrap();
    let a = train_generator(&pool, &tiny_gan_spec(0)).unwrap();
    let b = train_generator(&pool, &tiny_gan_spec(0)).unwrap();
    assert_eq!(a.generator.weights, b.generator.weights);
    assert!(a.d_losses.is_empty());
    let trained = train_generator(&pool, &tiny_gan_spec(1)).unwrap();
    assert_ne!(trained.generator.weights, a.generator.weights);
}

#[test]
fn generator_learns_a_single_colour_pool() {
    let n = 256;
    let mut px = Vec::with_capacity(n * 192);
    for _ in 0..n {
        for ch in 0..3 {
            px.extend(std::iter::repeat_n([200.0f32, 60.0, 120.0][ch], 64));
        }
    }
    let pool = Dataset::new(px, vec![0; n], [3, 8, 8], 1, Split::Train).unwrap();
    let training = train_generator(&pool, &tiny_gan_spec(12)).unwrap();
    let mut r = fedos_core::rng::stream(0, &[]);
    let raw = training.generator.sample_raw(100, &mut r).unwrap();
    let mean = raw.iter().map(|&v| v as f64).sum::<f64>() / raw.len() as f64;
    let pool_mean = (200.0 + 60.0 + 120.0) / 3.0;
    assert!((mean - pool_mean).abs() <= 0.1 * pool_mean, "generated mean {mean} vs {pool_mean}");
}

#[test]
fn checkpoint_round_trip_and_size_budget() {
    let dir = tempfile::tempdir().unwrap();
    let pool = synthesize_dataset(3, 64, 32, 32, 1).unwrap();
    let spec = GanSpec { epochs: 1, ..GanSpec::default() };
    let training = train_generator(&pool, &spec).unwrap();
    let gan = training.generator;
    let classifier = lenet();
    assert!(gan.parameter_count().unwrap() <= 2 * classifier.network.parameter_count().unwrap());
    let path = dir.path().join("g.fsw");
    gan.save(&path).unwrap();
    let back = TinyGan::load(&path, Some(&classifier)).unwrap();
    assert_eq!(back.weights, gan.weights);
    assert_eq!(back.spec, gan.spec);

    let wide = GanSpec { generator_widths: [128, 64, 32], epochs: 0, ..GanSpec::default() };
    let big = train_generator(&pool, &wide).unwrap().generator;
    big.save(&path).unwrap();
    let err = TinyGan::load(&path, Some(&classifier)).unwrap_err().to_string();
    assert!(err.contains("budget"), "{err}");
}
