use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    Raw,
    /// Divide by 255.
    Scaled,
    /// Per-channel `(x − mean) / std` with training-split statistics.
    Standardized,
}

impl Preprocessing {
    pub fn tag(self) -> &'static str {
        match self {
            Preprocessing::Raw => "raw",
            Preprocessing::Scaled => "scaled",
            Preprocessing::Standardized => "standardized",
        }
    }
}

/// Per-channel mean and population standard deviation of raw pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn compute(ds: &Dataset) -> ChannelStats {
        let [c, h, w] = ds.image_shape();
        let plane = h * w;
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for img in ds.images().chunks(c * plane) {
            for ch in 0..c {
                for &v in &img[ch * plane..(ch + 1) * plane] {
                    mean[ch] += v as f64;
                }
            }
        }
        let count = (ds.len() * plane) as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        for img in ds.images().chunks(c * plane) {
            for ch in 0..c {
                for &v in &img[ch * plane..(ch + 1) * plane] {
                    sq[ch] += (v as f64 - mean[ch]).powi(2);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count).sqrt()).collect();
        ChannelStats { mean, std }
    }
}

/// A preprocessing mode together with the statistics it needs, so the same
/// transform can be replayed on generated images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub kind: Preprocessing,
    pub stats: Option<ChannelStats>,
}

impl Preprocessor {
    pub fn raw() -> Self {
        Preprocessor {
            kind: Preprocessing::Raw,
            stats: None,
        }
    }

    /// Transform one raw `C × H × W` image in place.
    pub fn apply(&self, image: &mut [f32], channels: usize) {
        match self.kind {
            Preprocessing::Raw => {}
            Preprocessing::Scaled => image.iter_mut().for_each(|v| *v /= 255.0),
            Preprocessing::Standardized => {
                let stats = self.stats.as_ref().expect("standardisation statistics");
                let plane = image.len() / channels;
                for (ch, chunk) in image.chunks_mut(plane).enumerate() {
                    let (m, s) = (stats.mean[ch], stats.std[ch].max(1e-12));
                    for v in chunk {
                        *v = ((*v as f64 - m) / s) as f32;
                    }
                }
            }
        }
    }

    /// Transform raw images of shape `[c, h, w]` stored back to back.
    pub fn apply_images(&self, images: &mut [f32], [c, h, w]: [usize; 3]) {
        for img in images.chunks_mut(c * h * w) {
            self.apply(img, c);
        }
    }
}

/// Apply `p` to a raw dataset. Standardisation of a non-training split
/// requires `train_stats`; the training split computes its own when absent.
pub fn preprocess(
    ds: &Dataset,
    p: Preprocessing,
    train_stats: Option<&ChannelStats>,
) -> Result<Dataset> {
    if ds.preprocessor().kind != Preprocessing::Raw {
        return Err(Error::InvalidArgument(format!(
            "dataset is already {}",
            ds.preprocessor().kind.tag()
        )));
    }
    let stats = match (p, train_stats) {
        (Preprocessing::Standardized, Some(s)) => Some(s.clone()),
        (Preprocessing::Standardized, None) if ds.split() == Split::Train => {
            Some(ChannelStats::compute(ds))
        }
        (Preprocessing::Standardized, None) => {
            return Err(Error::InvalidArgument(
                "standardizing a non-training split needs training statistics".into(),
            ))
        }
        _ => None,
    };
    if let Some(s) = &stats {
        if s.mean.len() != ds.image_shape()[0] || s.std.len() != ds.image_shape()[0] {
            return Err(Error::Shape("statistics do not match channel count".into()));
        }
    }
    let pre = Preprocessor { kind: p, stats };
    let mut out = ds.clone();
    let shape = out.image_shape();
    pre.apply_images(out.images_mut(), shape);
    out.set_preprocessor(pre);
    Ok(out)
}
