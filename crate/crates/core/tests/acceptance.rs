//! Acceptance gate: every criterion at its stated tolerance, one PASS/FAIL
//! line each.
//!
//! Criteria that need CIFAR-10 read `$FEDOS_DATA_ROOT/cifar-10-batches-bin`
//! and print FAIL when it is absent. Such lines do not fail the process
//! unless `FEDOS_ACCEPTANCE_STRICT=1`; a criterion that ran and missed its
//! tolerance always does.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::fixtures::centralized_sgd;
use common::{conv_net, finite_difference_check, random_tensor, randomize, upsampling_net};
use fedos_core::data::{partition_labels, preprocess, Dataset, Partition, PartitionSpec, Preprocessing, Split, SyntheticSpec};
use fedos_core::fed::{run_training, ClientState, Federation, MetricTrace, RunOptions, Variant};
use fedos_core::fedos::{train_generator, GanSpec, Generator, UnknownConfig};
use fedos_core::harness::{
    prepare_data, run_experiment_on, run_preprocessing_sweep, DataSource,
    ExperimentConfig, NormChoice, PreparedData, VariantKind, CIFAR_DIR, DATA_ROOT_ENV,
};
use fedos_core::nn::{init_weights, NormKind, WeightSet};
use fedos_core::{ModelSpec, Result};
use rand::SeedableRng;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Required input is missing; nothing was measured.
    Unavailable(String),
}

struct Criterion {
    id: u8,
    name: &'static str,
    run: fn() -> Verdict,
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(budget: Duration, t: Instant) -> (bool, String) {
    let e = t.elapsed();
    (e <= budget, format!("{:.1}s of {}s", e.as_secs_f64(), budget.as_secs()))
}

// ---- 1: gradient suite ----

fn gradient_suite() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut skipped = 0;
    for (label, net, shape) in [
        ("conv/bn/gn/pool/dense", conv_net(), vec![3, 3, 8, 8]),
        ("dense/bn/upsample/conv/gn", upsampling_net(), vec![4, 6]),
    ] {
        for seed in 0..10 {
            let mut w = init_weights::<f64>(&net, seed).unwrap();
            randomize(&mut w, seed + 100, 0.5);
            let x = random_tensor(shape.clone(), seed + 200, 1.0);
            let r = finite_difference_check(&net, &w, &x, seed, 1e-5, None);
            skipped += r.skipped;
            for (name, e) in r.params.iter().cloned().chain([("input".to_string(), r.input)]) {
                if e > worst {
                    worst = e;
                    worst_at = format!("{label} seed {seed} {name}");
                }
            }
        }
    }
    for norm in [NormKind::None, NormKind::Batch, NormKind::default_groups()] {
        let spec = ModelSpec::lenet5(32, 32, 10, &norm, true).unwrap();
        for seed in 0..10 {
            let mut w = init_weights::<f64>(&spec.network, seed).unwrap();
            randomize(&mut w, seed + 1, 0.2);
            let x = random_tensor(vec![4, 3, 32, 32], seed + 2, 1.0);
            let r = finite_difference_check(&spec.network, &w, &x, seed + 3, 1e-5, Some(4));
            skipped += r.skipped;
            if r.worst() > worst {
                worst = r.worst();
                worst_at = format!("lenet5/{} seed {seed}", norm.tag());
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(120), t);
    check(
        worst < 1e-4 && fast,
        format!("worst relative error {worst:.2e} < 1e-4 ({worst_at}); {skipped} kink-straddling coordinates skipped; {time}"),
    )
}

// ---- 2: oracle equivalences ----

/// 500 standardized 32×32 training samples, exactly 50 per class, and a
/// separately drawn 100-sample validation split.
fn five_hundred() -> (Dataset, Dataset) {
    let mut spec = SyntheticSpec::new(10, 500, 32, 32, 11);
    let train = preprocess(&spec.generate(Split::Train).unwrap(), Preprocessing::Standardized, None).unwrap();
    spec.samples = 100;
    let stats = train.preprocessor().stats.clone();
    let val = preprocess(&spec.generate(Split::Val).unwrap(), Preprocessing::Standardized, stats.as_ref()).unwrap();
    (train, val)
}

fn dirichlet_clients(train: &Dataset, n: usize, per: usize, alpha: f64, seed: u64) -> Vec<ClientState> {
    let spec = PartitionSpec { n_clients: n, alpha, samples_per_client: per, seed };
    let p = partition_labels(train.labels(), train.class_count(), &spec).unwrap();
    ClientState::from_partition(&p, train).unwrap()
}

fn fed_run(
    spec: &ModelSpec,
    fed: &Federation,
    variant: &Variant,
) -> Result<(WeightSet<f32>, MetricTrace)> {
    let cfg = fedos_core::fed::RoundConfig {
        rounds: 3,
        client_fraction: 0.4,
        local_epochs: 1,
        batch_size: 32,
        lr: 0.05,
        seed: 21,
        parallel: true,
    };
    let (state, trace) = run_training::<f32>(spec, fed, &cfg, variant, RunOptions::new(0.5, 1.0))?;
    Ok((state.weights, trace))
}

/// Rows with the variant column dropped; everything else must agree bit
/// for bit.
fn numeric_rows(t: &MetricTrace) -> Vec<String> {
    t.csv_rows()
        .iter()
        .map(|r| {
            let mut f: Vec<&str> = r.split(',').collect();
            f.remove(1);
            f.join(",")
        })
        .collect()
}

fn same_run(a: &(WeightSet<f32>, MetricTrace), b: &(WeightSet<f32>, MetricTrace)) -> bool {
    a.0 == b.0 && numeric_rows(&a.1) == numeric_rows(&b.1)
}

fn oracle_equivalences() -> Verdict {
    let (train, val) = five_hundred();
    let mut notes = Vec::new();
    let mut ok = true;
    let minute = Duration::from_secs(60);
    let spec = ModelSpec::lenet5(32, 32, 10, &NormKind::None, false).unwrap();
    let fed = Federation { train: &train, val: &val, test: None, clients: dirichlet_clients(&train, 5, 100, 1.0, 3) };

    let t = Instant::now();
    let avg = fed_run(&spec, &fed, &Variant::FedAvg).unwrap();
    let prox = fed_run(&spec, &fed, &Variant::FedProx { mu: 0.0 }).unwrap();
    let (fast, time) = within(minute, t);
    ok &= same_run(&avg, &prox) && fast;
    notes.push(format!("fedprox(mu=0)=fedavg {} [{time}]", same_run(&avg, &prox)));

    // every client holds 10 samples of every class, so q_k = p exactly
    let t = Instant::now();
    let balanced: Vec<ClientState> = (0..5)
        .map(|k| {
            let mut idx = Vec::new();
            for y in 0..10 {
                idx.extend(train.labels().iter().enumerate().filter(|(_, &l)| l == y).map(|(i, _)| i).skip(10 * k).take(10));
            }
            idx.sort_unstable();
            ClientState::new(k, idx, &train).unwrap()
        })
        .collect();
    let fed_b = Federation { clients: balanced, ..fed.clone() };
    let ir = fed_run(&spec, &fed_b, &Variant::FedIr { smoothing: 1.0 }).unwrap();
    let avg_b = fed_run(&spec, &fed_b, &Variant::FedAvg).unwrap();
    let (fast, time) = within(minute, t);
    ok &= same_run(&ir, &avg_b) && fast;
    notes.push(format!("fedir(q=p)=fedavg {} [{time}]", same_run(&ir, &avg_b)));

    let t = Instant::now();
    let spec_u = ModelSpec::lenet5(32, 32, 10, &NormKind::None, true).unwrap();
    let os = fed_run(&spec_u, &fed, &Variant::FedOs(UnknownConfig::new(1.5, 0.0, Generator::Noise))).unwrap();
    let avg_u = fed_run(&spec_u, &fed, &Variant::FedAvg).unwrap();
    let (fast, time) = within(minute, t);
    ok &= same_run(&os, &avg_u) && fast;
    notes.push(format!("fedos(F_U=0)=fedavg(K+1) {} [{time}]", same_run(&os, &avg_u)));

    let t = Instant::now();
    let client = ClientState::new(0, (0..train.len()).collect(), &train).unwrap();
    let fed_1 = Federation { train: &train, val: &val, test: None, clients: vec![client] };
    let init = init_weights::<f64>(&spec.network, 5).unwrap();
    let cfg = fedos_core::fed::RoundConfig {
        rounds: 2,
        client_fraction: 1.0,
        local_epochs: 1,
        batch_size: 32,
        lr: 0.05,
        seed: 5,
        parallel: false,
    };
    let mut opts = RunOptions::new(1.0, 1.0);
    opts.initial = Some(init.clone());
    let (state, _) = run_training::<f64>(&spec, &fed_1, &cfg, &Variant::FedAvg, opts).unwrap();
    let oracle = centralized_sgd(&spec, &init, &train, 2, 32, 0.05, 5);
    let diff = state.weights.max_abs_diff(&oracle[1]).unwrap();
    let (fast, time) = within(minute, t);
    ok &= diff <= 1e-12 && fast;
    notes.push(format!("single client vs centralized max diff {diff:.1e} <= 1e-12 [{time}]"));
    check(ok, notes.join("; "))
}

// ---- 3: partition statistics ----

fn partition_statistics() -> Verdict {
    // CIFAR-10 training split after the 10% validation carve-out
    let labels: Vec<usize> = (0..45_000).map(|i| i % 10).collect();
    let alphas = [0.01, 0.1, 1.0, 100.0];
    let seeds = 20u64;
    let mut ok = true;
    let mut entropies = Vec::new();
    let mut shares = Vec::new();
    for &alpha in &alphas {
        let mut sum = 0.0;
        for seed in 0..seeds {
            let p: Partition = partition_labels(&labels, 10, &PartitionSpec::new(alpha, seed)).unwrap();
            let mut seen = vec![false; labels.len()];
            for a in &p.assignments {
                ok &= a.len() == 2000;
                for &i in a {
                    ok &= !seen[i];
                    seen[i] = true;
                }
            }
            sum += (0..p.n_clients()).map(|k| p.entropy(k)).sum::<f64>() / p.n_clients() as f64;
            if alpha == 0.01 {
                shares.extend((0..p.n_clients()).map(|k| p.dominant_share(k)));
            }
        }
        entropies.push(sum / seeds as f64);
    }
    let monotone = entropies.windows(2).all(|w| w[0] <= w[1]);
    shares.sort_by(f64::total_cmp);
    let median = shares[shares.len() / 2];
    check(
        ok && monotone && median >= 0.95,
        format!(
            "disjoint with 2000 per client: {ok}; mean entropy {:?} non-decreasing: {monotone}; alpha=0.01 median dominant share {median:.3} >= 0.95 over {} clients",
            entropies.iter().map(|e| (e * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            shares.len()
        ),
    )
}

// ---- 4-7: CIFAR-10 desk scale ----

fn cifar_dir() -> Option<PathBuf> {
    let dir = Path::new(&std::env::var_os(DATA_ROOT_ENV)?).join(CIFAR_DIR);
    dir.join("data_batch_1.bin").exists().then_some(dir)
}

fn unavailable() -> Verdict {
    Verdict::Unavailable(format!("CIFAR-10 not found at ${DATA_ROOT_ENV}/{CIFAR_DIR}"))
}

/// 10k-sample training subset and 2k validation samples, 3 seeds, LeNet-5,
/// lr 0.1, standardized.
fn desk_cifar(dir: PathBuf, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.dataset.source = DataSource::Cifar10;
    c.dataset.path = Some(dir);
    c.dataset.train_subset = 12_000;
    c.dataset.test_subset = 2_000;
    c.dataset.val_fraction = 2.0 / 12.0;
    c.seeds = vec![0, 1, 2];
    c.output_dir = out.to_path_buf();
    c.centralized.epochs = 20;
    // 8 clients at C = 0.5 keep 4 clients per round
    c.partition.n_clients = 8;
    c.partition.samples_per_client = 1000;
    c.rounds.client_fraction = 0.5;
    c.rounds.rounds = 30;
    c.report.checkpoints = vec![];
    c
}

fn centralized_desk() -> Verdict {
    let Some(dir) = cifar_dir() else { return unavailable() };
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = desk_cifar(dir, tmp.path());
    let preps = [Preprocessing::Standardized, Preprocessing::Scaled, Preprocessing::Raw];
    let sweep = match run_preprocessing_sweep(&cfg, &preps, &[0.1, 0.05, 0.01]) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let finals: Vec<f64> = sweep
        .cells
        .iter()
        .filter(|c| c.preprocessing == Preprocessing::Standardized && c.lr == 0.1)
        .filter_map(|c| c.final_val_acc)
        .collect();
    let mean_final = finals.iter().sum::<f64>() / 3.0;
    let best: Vec<Option<f64>> = preps.iter().map(|&p| sweep.best_of_sweep(p)).collect();
    let ordered = match (best[0], best[1], best[2]) {
        (Some(s), Some(c), r) => s >= c && c >= r.unwrap_or(0.0),
        _ => false,
    };
    let (fast, time) = within(Duration::from_secs(30 * 60), t);
    check(
        finals.len() == 3 && mean_final >= 0.35 && ordered && fast,
        format!(
            "standardized lr=0.1 final val acc {:.2}% >= 35%; best-of-sweep standardized/scaled/raw {:?} ordered: {ordered}; {time}",
            100.0 * mean_final,
            best
        ),
    )
}

struct Family {
    cfg: ExperimentConfig,
    data: PreparedData,
    _tmp: tempfile::TempDir,
}

fn family() -> Option<Family> {
    let dir = cifar_dir()?;
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk_cifar(dir, tmp.path());
    let data = prepare_data(&cfg).ok()?;
    let reference = fedos_core::harness::reference_accuracy(&cfg, &data).ok()?;
    cfg.centralized.reference_accuracy = Some(reference);
    Some(Family { cfg, data, _tmp: tmp })
}

/// Per-seed traces of one federated configuration.
fn traces(f: &Family, tag: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> Result<Vec<MetricTrace>> {
    let mut c = f.cfg.clone();
    edit(&mut c);
    c.output_dir = f.cfg.output_dir.join(tag);
    let out = run_experiment_on(&c, &f.data)?;
    out.runs.iter().map(|r| MetricTrace::read_csv(&r.trace_path())).collect()
}

fn seed_mean(ts: &[MetricTrace], stat: impl Fn(&MetricTrace) -> f64) -> f64 {
    ts.iter().map(stat).sum::<f64>() / ts.len() as f64
}

fn final_acc(t: &MetricTrace) -> f64 {
    t.records.last().map_or(0.0, |r| r.val_acc)
}

fn mean_acc(t: &MetricTrace) -> f64 {
    t.summary().map_or(0.0, |s| s.mean_val_acc)
}

fn heterogeneity_trend() -> Verdict {
    let Some(f) = family() else { return unavailable() };
    let run = || -> Result<(f64, f64)> {
        let iid = traces(&f, "a100", |c| c.partition.alpha = 100.0)?;
        let skew = traces(&f, "a001", |c| c.partition.alpha = 0.01)?;
        Ok((seed_mean(&iid, final_acc), seed_mean(&skew, final_acc)))
    };
    match run() {
        Ok((iid, skew)) => check(
            iid - skew >= 0.05,
            format!("final val acc alpha=100 {:.2}% vs alpha=0.01 {:.2}%, gap >= 5 points", 100.0 * iid, 100.0 * skew),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn normalization_trend() -> Verdict {
    let Some(f) = family() else { return unavailable() };
    let run = || -> Result<[f64; 4]> {
        let norm = |n: NormChoice| move |c: &mut ExperimentConfig| c.model.norm = n;
        let with_alpha = |a: f64, n: NormChoice| {
            move |c: &mut ExperimentConfig| {
                c.partition.alpha = a;
                norm(n)(c);
            }
        };
        let none_100 = traces(&f, "none100", with_alpha(100.0, NormChoice::None))?;
        let bn_100 = traces(&f, "bn100", with_alpha(100.0, NormChoice::Batch))?;
        let bn_001 = traces(&f, "bn001", with_alpha(0.01, NormChoice::Batch))?;
        let gn_001 = traces(&f, "gn001", with_alpha(0.01, NormChoice::Group))?;
        Ok([&none_100, &bn_100, &bn_001, &gn_001].map(|t| seed_mean(t, mean_acc)))
    };
    match run() {
        Ok([none_100, bn_100, bn_001, gn_001]) => check(
            bn_100 >= none_100 && gn_001 >= bn_001,
            format!(
                "mean val acc alpha=100 batch {:.2}% >= none {:.2}%; alpha=0.01 group {:.2}% >= batch {:.2}%",
                100.0 * bn_100,
                100.0 * none_100,
                100.0 * gn_001,
                100.0 * bn_001
            ),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn fedos_trend() -> Verdict {
    let Some(f) = family() else { return unavailable() };
    let run = || -> Result<[f64; 4]> {
        let setup = |alpha: f64, fedos: Option<(f64, f64)>| {
            move |c: &mut ExperimentConfig| {
                c.partition.alpha = alpha;
                c.rounds.rounds = 60;
                if let Some((w_u, f_u)) = fedos {
                    c.variant.kind = VariantKind::Fedos;
                    c.variant.w_u = w_u;
                    c.variant.f_u = f_u;
                    c.variant.generator = fedos_core::harness::GeneratorChoice::GaussianFit;
                }
            }
        };
        let rel = |t: &MetricTrace| t.summary().map_or(0.0, |s| s.mean_rel_val_acc);
        let rel_max = |t: &MetricTrace| t.summary().map_or(0.0, |s| s.max_rel_val_acc);
        let os_001 = traces(&f, "os001", setup(0.01, Some((1.0, 0.8))))?;
        let avg_001 = traces(&f, "avg001", setup(0.01, None))?;
        let os_1 = traces(&f, "os1", setup(1.0, Some((1.5, 0.4))))?;
        let avg_1 = traces(&f, "avg1", setup(1.0, None))?;
        Ok([
            seed_mean(&os_001, rel),
            seed_mean(&avg_001, rel),
            seed_mean(&os_1, rel_max),
            seed_mean(&avg_1, rel_max),
        ])
    };
    match run() {
        Ok([os_001, avg_001, os_1, avg_1]) => check(
            os_001 >= avg_001 && os_1 >= avg_1,
            format!(
                "alpha=0.01 mean rel acc fedos {os_001:.2} >= fedavg {avg_001:.2}; alpha=1 max rel acc fedos {os_1:.2} >= fedavg {avg_1:.2}"
            ),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

// ---- 8: determinism ----

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
seeds = [0, 1]

[dataset]
source = "synthetic"
val_fraction = 0.2

[dataset.synthetic]
classes = 10
train_samples = 700
test_samples = 100

[model]
norm = "group"

[partition]
n_clients = 6
samples_per_client = 80
alpha = 0.1

[rounds]
rounds = 4
client_fraction = 0.5

[variant]
kind = "fedos"
w_u = 1.5
f_u = 0.4

[centralized]
reference_accuracy = 0.5

[report]
checkpoints = [2, 4]
"#;
    let base = ExperimentConfig::parse(text).unwrap();
    let data = prepare_data(&base).unwrap();
    let run = |name: &str, parallel: bool, threads: usize| {
        let mut c = base.clone();
        c.output_dir = tmp.path().join(name);
        c.rounds.parallel = parallel;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| run_experiment_on(&c, &data)).unwrap();
        (c.hash(), out.runs.iter().map(|r| artifact_bytes(&r.dir)).collect::<Vec<_>>())
    };
    let a = run("a", true, 4);
    let b = run("b", true, 4);
    let seq = run("seq", false, 1);
    let rerun = a == b;
    let par_seq = a == seq;
    let files: usize = a.1.iter().map(Vec::len).sum();
    check(
        rerun && par_seq && a.0 == seq.0,
        format!("{files} artifacts over 2 seeds: rerun bit-identical {rerun}; 4-thread parallel == sequential {par_seq}; shared hash {}", &a.0[..12]),
    )
}

// ---- 9: TinyGan ----

fn tiny_gan() -> Verdict {
    let t = Instant::now();
    let pool = SyntheticSpec::new(10, 5000, 32, 32, 42).generate(Split::Train).unwrap();
    let training = match train_generator(&pool, &GanSpec::default()) {
        Ok(g) => g,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let finite = training.d_losses.iter().chain(&training.g_losses).all(|l| l.is_finite());
    let n = 1000;
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let samples = training.generator.sample_raw(n, &mut r).unwrap();
    let plane = 32 * 32;
    let channel_mean = |images: &[f32], count: usize| -> Vec<f64> {
        (0..3)
            .map(|c| {
                images.chunks(3 * plane).map(|img| img[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>()).sum::<f64>()
                    / (count * plane) as f64
            })
            .collect()
    };
    let gen_mean = channel_mean(&samples, n);
    let pool_mean = channel_mean(pool.images(), pool.len());
    let worst = gen_mean.iter().zip(&pool_mean).map(|(g, p)| ((g - p) / p).abs()).fold(0.0, f64::max);
    let classifier = ModelSpec::lenet5(32, 32, 10, &NormKind::None, true).unwrap();
    let g_params = training.generator.parameter_count().unwrap();
    let c_params = classifier.network.parameter_count().unwrap();
    check(
        finite && worst <= 0.2 && g_params <= 2 * c_params,
        format!(
            "losses finite: {finite} (d {:.3?}, g {:.3?}); per-channel mean {:.1?} vs pool {:.1?}, worst deviation {:.1}% <= 20%; generator {g_params} <= 2 x classifier {c_params} params; {:.1}s",
            training.d_losses,
            training.g_losses,
            gen_mean,
            pool_mean,
            100.0 * worst,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient suite", run: gradient_suite },
        Criterion { id: 2, name: "oracle equivalences", run: oracle_equivalences },
        Criterion { id: 3, name: "partition statistics", run: partition_statistics },
        Criterion { id: 4, name: "centralized desk scale", run: centralized_desk },
        Criterion { id: 5, name: "heterogeneity trend", run: heterogeneity_trend },
        Criterion { id: 6, name: "normalization trend", run: normalization_trend },
        Criterion { id: 7, name: "fedos trend", run: fedos_trend },
        Criterion { id: 8, name: "determinism and parallelism", run: determinism },
        Criterion { id: 9, name: "tiny gan sanity", run: tiny_gan },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let strict = std::env::var("FEDOS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let (mut passed, mut failed, mut missing) = (0, 0, 0);
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || *f == c.id.to_string()) {
            continue;
        }
        match (c.run)() {
            Verdict::Pass(d) => {
                passed += 1;
                println!("PASS [{}] {}: {d}", c.id, c.name);
            }
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL [{}] {}: {d}", c.id, c.name);
            }
            Verdict::Unavailable(d) => {
                missing += 1;
                println!("FAIL [{}] {}: {d}", c.id, c.name);
            }
        }
    }
    println!("acceptance: {passed} passed, {} failed ({missing} for missing data)", failed + missing);
    if failed > 0 || (strict && missing > 0) {
        std::process::exit(1);
    }
}
