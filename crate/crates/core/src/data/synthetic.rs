use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

/// Class-conditional Gaussian image blobs. Each class owns a smooth
/// prototype (a sum of low-frequency plane waves per channel around
/// mid-grey); samples add i.i.d. pixel noise and are clamped to `0..=255`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    /// Peak deviation of a prototype from mid-grey, in pixel units.
    pub amplitude: f64,
    /// Standard deviation of the per-pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, samples: usize, height: usize, width: usize, seed: u64) -> Self {
        SyntheticSpec {
            classes,
            samples,
            height,
            width,
            amplitude: 60.0,
            noise: 70.0,
            seed,
        }
    }

    /// Prototype image of class `k`, in raw pixel units.
    pub fn prototype(&self, k: usize) -> Vec<f32> {
        let (h, w) = (self.height, self.width);
        let mut r = rng::stream(self.seed, &[purpose::SYNTHETIC, 0, k as u64]);
        let mut img = vec![0.0f32; 3 * h * w];
        for ch in 0..3 {
            let waves: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        r.random_range(0.5..2.5),
                        r.random_range(0.5..2.5),
                        r.random_range(0.0..std::f64::consts::TAU),
                        r.random_range(-1.0..1.0),
                    )
                })
                .collect();
            for y in 0..h {
                for x in 0..w {
                    let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
                    let v: f64 = waves
                        .iter()
                        .map(|(ky, kx, ph, a)| a * (std::f64::consts::TAU * (ky * fy + kx * fx) + ph).cos())
                        .sum::<f64>()
                        / 3f64.sqrt();
                    img[(ch * h + y) * w + x] = (127.5 + self.amplitude * v) as f32;
                }
            }
        }
        img
    }

    pub fn generate(&self, split: Split) -> Result<Dataset> {
        if self.classes == 0 || self.samples == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(
                "synthetic dataset needs positive sizes".into(),
            ));
        }
        let noise = Normal::new(0.0, self.noise.max(0.0))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let protos: Vec<Vec<f32>> = (0..self.classes).map(|k| self.prototype(k)).collect();
        let mut r = rng::stream(self.seed, &[purpose::SYNTHETIC, 1, split.code() as u64]);
        let mut labels: Vec<usize> = (0..self.samples).map(|i| i % self.classes).collect();
        // Fisher-Yates keeps the per-class counts exact
        for i in (1..labels.len()).rev() {
            labels.swap(i, r.random_range(0..=i));
        }
        let per = 3 * self.height * self.width;
        let mut images = Vec::with_capacity(self.samples * per);
        for &l in &labels {
            images.extend(protos[l].iter().map(|&p| {
                (p as f64 + noise.sample(&mut r)).clamp(0.0, 255.0) as f32
            }));
        }
        Dataset::new(images, labels, [3, self.height, self.width], self.classes, split)
    }
}

/// Synthetic training split with default blob parameters.
pub fn synthesize_dataset(k: usize, n: usize, h: usize, w: usize, seed: u64) -> Result<Dataset> {
    SyntheticSpec::new(k, n, h, w, seed).generate(Split::Train)
}
