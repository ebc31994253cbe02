use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fed::ClientState;
use crate::fedos::{TinyGan, UnknownConfig};
use crate::rng::{self, purpose, StreamRng};

/// Per-pixel independent Gaussian fitted to an image pool.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub image_shape: [usize; 3],
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl GaussianFit {
    /// Fit to raw (`0..=255`) pool images.
    pub fn fit(pool: &Dataset) -> Result<GaussianFit> {
        raw_only(pool)?;
        let n = pool.image_len();
        let mut sum = vec![0.0f64; n];
        let mut sq = vec![0.0f64; n];
        for i in 0..pool.len() {
            for (j, &v) in pool.image(i).iter().enumerate() {
                sum[j] += v as f64;
                sq[j] += (v as f64) * (v as f64);
            }
        }
        let count = pool.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| ((s / count - m * m).max(0.0)).sqrt() as f32)
            .collect();
        Ok(GaussianFit {
            image_shape: pool.image_shape(),
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }
}

fn raw_only(pool: &Dataset) -> Result<()> {
    if pool.preprocessor().kind != crate::data::Preprocessing::Raw {
        return Err(Error::InvalidArgument(
            "generators are fitted to raw 0..255 images".into(),
        ));
    }
    Ok(())
}

/// Source of unknown-class images. Every generator emits raw pixels; the
/// classifier's preprocessing is applied afterwards.
#[derive(Clone, Debug)]
pub enum Generator {
    /// Uniform pixel noise over `0..=255`.
    Noise,
    GaussianFit(GaussianFit),
    TinyGan(Box<TinyGan>),
}

impl Generator {
    pub fn kind(&self) -> &'static str {
        match self {
            Generator::Noise => "noise",
            Generator::GaussianFit(_) => "gaussian_fit",
            Generator::TinyGan(_) => "tiny_gan",
        }
    }

    fn check_shape(&self, shape: [usize; 3]) -> Result<()> {
        let own = match self {
            Generator::Noise => return Ok(()),
            Generator::GaussianFit(g) => g.image_shape,
            Generator::TinyGan(g) => g.image_shape(),
        };
        if own != shape {
            return Err(Error::Shape(format!(
                "generator emits {own:?} images, classifier expects {shape:?}"
            )));
        }
        Ok(())
    }

    /// `n` raw images of `shape`, back to back.
    pub fn sample_raw(&self, n: usize, shape: [usize; 3], rng: &mut StreamRng) -> Result<Vec<f32>> {
        self.check_shape(shape)?;
        let per: usize = shape.iter().product();
        Ok(match self {
            Generator::Noise => (0..n * per).map(|_| rng.random_range(0.0f32..=255.0)).collect(),
            Generator::GaussianFit(g) => {
                let mut out = Vec::with_capacity(n * per);
                for _ in 0..n {
                    for (m, s) in g.mean.iter().zip(&g.std) {
                        let z: f32 = StandardNormal.sample(rng);
                        out.push((m + s * z).clamp(0.0, 255.0));
                    }
                }
                out
            }
            Generator::TinyGan(g) => g.sample_raw(n, rng)?,
        })
    }
}

/// Generated images carrying the unknown label, already preprocessed.
#[derive(Clone, Debug, PartialEq)]
pub struct UnknownCache {
    pub images: Vec<f32>,
    pub image_len: usize,
    pub label: usize,
}

impl UnknownCache {
    pub fn len(&self) -> usize {
        self.images.len().checked_div(self.image_len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.image_len..(i + 1) * self.image_len]
    }
}

pub(crate) fn generate_with(
    generator: &Generator,
    n: usize,
    rng: &mut StreamRng,
    like: &Dataset,
    unknown_label: usize,
) -> Result<UnknownCache> {
    let shape = like.image_shape();
    let mut images = generator.sample_raw(n, shape, rng)?;
    like.preprocessor().apply_images(&mut images, shape);
    Ok(UnknownCache {
        images,
        image_len: shape.iter().product(),
        label: unknown_label,
    })
}

/// `n` unknown samples shaped and preprocessed like `like`, labelled
/// `unknown_label`; deterministic in `seed`.
pub fn generate_unknown(
    generator: &Generator,
    n: usize,
    seed: u64,
    like: &Dataset,
    unknown_label: usize,
) -> Result<UnknownCache> {
    let mut r = rng::stream(seed, &[purpose::UNKNOWN_CACHE]);
    generate_with(generator, n, &mut r, like, unknown_label)
}

/// Give every client its once-per-experiment cache of
/// `round(F_U · n_local)` samples, drawn from the stream of
/// `(seed, client id)`.
pub fn attach_unknown_caches(
    clients: &mut [ClientState],
    cfg: &UnknownConfig,
    seed: u64,
    train: &Dataset,
    unknown_label: usize,
) -> Result<()> {
    for c in clients {
        let mut r = rng::stream(seed, &[purpose::UNKNOWN_CACHE, c.id as u64]);
        let n = cfg.unknown_count(c.len());
        c.unknown = Some(generate_with(&cfg.generator, n, &mut r, train, unknown_label)?);
    }
    Ok(())
}

/// Dump raw images as planar RGB bytes, one record per
/// image, matching the pool loader's layout.
pub fn write_raw_rgb(images: &[f32], path: &Path) -> Result<()> {
    let bytes: Vec<u8> = images.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
