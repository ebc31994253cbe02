use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{init_weights, Gradients, LayerSpec, Mode, ModelSpec, Network, Tensor, WeightSet};
use crate::rng::{self, purpose, StreamRng};

const LEAKY_SLOPE: f64 = 0.2;
const ADAM_BETA1: f32 = 0.5;
const ADAM_BETA2: f32 = 0.999;
const ADAM_EPS: f32 = 1e-8;
/// The generator may have at most this many times the classifier's parameters.
pub const MAX_SIZE_RATIO: usize = 2;

/// A small DCGAN-style pair: the generator upsamples a dense projection of
/// the latent code three times; the discriminator is two conv/pool stages
/// and a linear score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSpec {
    pub latent_dim: usize,
    /// Channels at 1/8, 1/4 and 1/2 resolution.
    pub generator_widths: [usize; 3],
    pub discriminator_widths: [usize; 2],
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GanSpec {
    fn default() -> Self {
        GanSpec {
            latent_dim: 64,
            generator_widths: [32, 16, 8],
            discriminator_widths: [8, 16],
            epochs: 3,
            lr: 2e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl GanSpec {
    pub fn generator_network(&self, [c, h, w]: [usize; 3]) -> Result<Network> {
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(Error::Model(format!(
                "generator needs image sides divisible by 8, got {h}x{w}"
            )));
        }
        let [w0, w1, w2] = self.generator_widths;
        let conv = |out_channels| LayerSpec::Conv2d {
            out_channels,
            kernel: 3,
            padding: 1,
        };
        let up = LayerSpec::Upsample2d { factor: 2 };
        Ok(Network::new(
            vec![self.latent_dim],
            vec![
                LayerSpec::Dense {
                    out_features: w0 * (h / 8) * (w / 8),
                },
                LayerSpec::Relu,
                LayerSpec::Reshape {
                    shape: vec![w0, h / 8, w / 8],
                },
                up.clone(),
                conv(w1),
                LayerSpec::Relu,
                up.clone(),
                conv(w2),
                LayerSpec::Relu,
                up,
                conv(c),
                LayerSpec::Sigmoid,
            ],
        ))
    }

    pub fn discriminator_network(&self, shape: [usize; 3]) -> Network {
        let [d0, d1] = self.discriminator_widths;
        let mut layers = Vec::new();
        for width in [d0, d1] {
            layers.extend([
                LayerSpec::Conv2d {
                    out_channels: width,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
                LayerSpec::AvgPool2d { size: 2 },
            ]);
        }
        layers.extend([LayerSpec::Flatten, LayerSpec::Dense { out_features: 1 }]);
        Network::new(shape.to_vec(), layers)
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("latent_dim and batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("GAN learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// A trained generator; emits raw `0..=255` images.
#[derive(Clone, Debug)]
pub struct TinyGan {
    pub spec: GanSpec,
    image_shape: [usize; 3],
    network: Network,
    pub weights: WeightSet<f32>,
}

impl TinyGan {
    pub fn new(spec: GanSpec, image_shape: [usize; 3], weights: WeightSet<f32>) -> Result<Self> {
        let network = spec.generator_network(image_shape)?;
        weights.check_network(&network)?;
        Ok(TinyGan {
            spec,
            image_shape,
            network,
            weights,
        })
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn parameter_count(&self) -> Result<usize> {
        self.network.parameter_count()
    }

    /// Enforce the size budget relative to a classifier.
    pub fn check_size(&self, classifier: &ModelSpec) -> Result<()> {
        let own = self.parameter_count()?;
        let budget = MAX_SIZE_RATIO * classifier.network.parameter_count()?;
        if own > budget {
            return Err(Error::Model(format!(
                "generator has {own} parameters, budget is {budget}"
            )));
        }
        Ok(())
    }

    fn latent(&self, n: usize, rng: &mut StreamRng) -> Tensor<f32> {
        let z = (0..n * self.spec.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::new(vec![n, self.spec.latent_dim], z).expect("latent shape")
    }

    /// Images in `[0, 1]`, shape `[n, C, H, W]`.
    fn sample_unit(&self, n: usize, rng: &mut StreamRng) -> Result<Tensor<f32>> {
        let z = self.latent(n, rng);
        Ok(self.network.forward(&self.weights, &z, Mode::Eval)?.output)
    }

    pub fn sample_raw(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<f32>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        Ok(self.sample_unit(n, rng)?.into_data().into_iter().map(|v| v * 255.0).collect())
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let [c, h, w] = self.image_shape;
        vec![
            ("kind".into(), "tiny_gan".into()),
            ("spec".into(), serde_json::to_string(&self.spec).expect("spec serializes")),
            ("latent_dim".into(), self.spec.latent_dim.to_string()),
            ("input_shape".into(), format!("{c}x{h}x{w}")),
            ("preprocessing".into(), "raw".into()),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.weights.save(path, &self.metadata())
    }

    /// Load a generator checkpoint; with `classifier`, the size budget is
    /// enforced.
    pub fn load(path: &Path, classifier: Option<&ModelSpec>) -> Result<TinyGan> {
        let (weights, meta) = WeightSet::<f32>::load(path)?;
        let get = |k: &str| {
            meta.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("generator checkpoint lacks `{k}`")))
        };
        if get("kind")? != "tiny_gan" {
            return Err(Error::Format("checkpoint is not a tiny_gan generator".into()));
        }
        let spec: GanSpec =
            serde_json::from_str(get("spec")?).map_err(|e| Error::Format(e.to_string()))?;
        let dims: Vec<usize> = get("input_shape")?
            .split('x')
            .map(|d| d.parse().map_err(|_| Error::Format("bad input_shape".into())))
            .collect::<Result<_>>()?;
        let shape: [usize; 3] = dims
            .try_into()
            .map_err(|_| Error::Format("input_shape needs three dims".into()))?;
        let gan = TinyGan::new(spec, shape, weights)?;
        if let Some(c) = classifier {
            gan.check_size(c)?;
        }
        Ok(gan)
    }
}

/// Adam state for one weight set; buffers are left untouched.
struct Adam {
    lr: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    fn new(weights: &WeightSet<f32>, lr: f64) -> Self {
        let zeros: Vec<Vec<f32>> = weights.entries().iter().map(|e| vec![0.0; e.tensor.len()]).collect();
        Adam {
            lr: lr as f32,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn step(&mut self, weights: &mut WeightSet<f32>, grads: &Gradients<f32>) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, entry) in weights.entries_mut().iter_mut().enumerate() {
            if !entry.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &g)) in entry.tensor.data_mut().iter_mut().zip(grads.tensors[i].data()).enumerate() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
                *w -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean binary cross-entropy on logits and its gradient.
fn bce(logits: &Tensor<f32>, targets: &[f32]) -> (f64, Tensor<f32>) {
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .data()
        .iter()
        .zip(targets)
        .map(|(&d, &t)| {
            let d = d as f64;
            loss += if t > 0.5 { softplus(-d) } else { softplus(d) };
            ((sigmoid(d) - t as f64) / n) as f32
        })
        .collect();
    (loss / n, Tensor::new(logits.shape().to_vec(), grad).expect("logit shape"))
}

fn stack(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let mut shape = a.shape().to_vec();
    shape[0] += b.rows();
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(shape, data).expect("stacked shape")
}

/// Outcome of adversarial training.
#[derive(Clone, Debug)]
pub struct GanTraining {
    pub generator: TinyGan,
    pub discriminator: WeightSet<f32>,
    pub discriminator_network: Network,
    /// Mean losses per epoch.
    pub d_losses: Vec<f64>,
    pub g_losses: Vec<f64>,
}

fn unit_batch(pool: &Dataset, idx: &[usize]) -> Tensor<f32> {
    let mut b = pool.batch::<f32>(idx).images;
    b.data_mut().iter_mut().for_each(|v| *v /= 255.0);
    b
}

/// Non-saturating adversarial training on raw pool images (labels unused).
pub fn train_generator(pool: &Dataset, spec: &GanSpec) -> Result<GanTraining> {
    spec.validate()?;
    if pool.preprocessor().kind != crate::data::Preprocessing::Raw {
        return Err(Error::InvalidArgument("GAN pool must hold raw images".into()));
    }
    let shape = pool.image_shape();
    let g_net = spec.generator_network(shape)?;
    let d_net = spec.discriminator_network(shape);
    let mut g_w = init_weights::<f32>(&g_net, rng::stream(spec.seed, &[purpose::GAN, 0]).random::<u64>())?;
    let mut d_w = init_weights::<f32>(&d_net, rng::stream(spec.seed, &[purpose::GAN, 1]).random::<u64>())?;
    let mut g_opt = Adam::new(&g_w, spec.lr);
    let mut d_opt = Adam::new(&d_w, spec.lr);
    let mut z_rng = rng::stream(spec.seed, &[purpose::GAN, 2]);
    let mut gan = TinyGan::new(spec.clone(), shape, g_w.clone())?;
    let (mut d_losses, mut g_losses) = (Vec::new(), Vec::new());

    for epoch in 0..spec.epochs {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng::stream(spec.seed, &[purpose::GAN, 3, epoch as u64]));
        let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
        for idx in order.chunks(spec.batch_size) {
            let b = idx.len();
            // discriminator: real (target 1) and generated (target 0) in one pass
            let real = unit_batch(pool, idx);
            let z = gan.latent(b, &mut z_rng);
            let fake = g_net.forward(&g_w, &z, Mode::Train)?.output;
            let both = stack(&real, &fake);
            let targets: Vec<f32> = (0..2 * b).map(|i| if i < b { 1.0 } else { 0.0 }).collect();
            let pass = d_net.forward(&d_w, &both, Mode::Train)?;
            let (d_loss, dlogits) = bce(&pass.output, &targets);
            let (d_grads, _) = d_net.backward(&d_w, &pass, &dlogits, false)?;
            d_opt.step(&mut d_w, &d_grads);

            // generator: push D(G(z)) towards "real"
            let z = gan.latent(b, &mut z_rng);
            let g_pass = g_net.forward(&g_w, &z, Mode::Train)?;
            let d_pass = d_net.forward(&d_w, &g_pass.output, Mode::Train)?;
            let (g_loss, dlogits) = bce(&d_pass.output, &vec![1.0; b]);
            let (_, dimages) = d_net.backward(&d_w, &d_pass, &dlogits, true)?;
            let dimages = dimages.ok_or_else(|| Error::Model("no input gradient".into()))?;
            let (g_grads, _) = g_net.backward(&g_w, &g_pass, &dimages, false)?;
            g_opt.step(&mut g_w, &g_grads);

            if !(d_loss.is_finite() && g_loss.is_finite()) {
                return Err(Error::Diverged {
                    round: epoch + 1,
                    loss: if d_loss.is_finite() { g_loss } else { d_loss },
                });
            }
            gan.weights = g_w.clone();
            d_sum += d_loss;
            g_sum += g_loss;
            steps += 1;
        }
        d_losses.push(d_sum / steps.max(1) as f64);
        g_losses.push(g_sum / steps.max(1) as f64);
    }
    gan.weights = g_w;
    Ok(GanTraining {
        generator: gan,
        discriminator: d_w,
        discriminator_network: d_net,
        d_losses,
        g_losses,
    })
}

/// Fraction of held-out real images scored real plus generated images
/// scored fake, over both sets.
pub fn discriminator_accuracy(training: &GanTraining, held_out: &Dataset, seed: u64) -> Result<f64> {
    let idx: Vec<usize> = (0..held_out.len()).collect();
    let real = unit_batch(held_out, &idx);
    let mut r = rng::stream(seed, &[purpose::GAN, 4]);
    let fake = training.generator.sample_unit(held_out.len(), &mut r)?;
    let net = &training.discriminator_network;
    let score = |x: &Tensor<f32>, want_real: bool| -> Result<usize> {
        let out = net.forward(&training.discriminator, x, Mode::Eval)?.output;
        Ok(out.data().iter().filter(|&&d| (d > 0.0) == want_real).count())
    };
    let correct = score(&real, true)? + score(&fake, false)?;
    Ok(correct as f64 / (2 * held_out.len()) as f64)
}
