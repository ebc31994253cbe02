use serde::{Deserialize, Serialize};

use crate::data::Preprocessor;
use crate::error::{Error, Result};
use crate::nn::{Batch, Real, Tensor};
use crate::rng::{self, purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub(crate) fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Split::Train,
            1 => Split::Val,
            2 => Split::Test,
            _ => return None,
        })
    }
}

/// Labelled images in `N × C × H × W` layout. Raw data is in byte range
/// `0..=255`; [`Dataset::preprocessor`] records what has been applied since.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<f32>,
    labels: Vec<usize>,
    image_shape: [usize; 3],
    class_count: usize,
    split: Split,
    preprocessor: Preprocessor,
}

impl Dataset {
    pub fn new(
        images: Vec<f32>,
        labels: Vec<usize>,
        image_shape: [usize; 3],
        class_count: usize,
        split: Split,
    ) -> Result<Self> {
        let per: usize = image_shape.iter().product();
        if labels.is_empty() || per == 0 {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        if images.len() != labels.len() * per {
            return Err(Error::Shape(format!(
                "{} pixels for {} images of {image_shape:?}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {class_count} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            image_shape,
            class_count,
            split,
            preprocessor: Preprocessor::raw(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        &self.preprocessor
    }

    pub(crate) fn set_preprocessor(&mut self, p: Preprocessor) {
        self.preprocessor = p;
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub(crate) fn images_mut(&mut self) -> &mut [f32] {
        &mut self.images
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut images = Vec::with_capacity(indices.len() * self.image_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "index {i} outside dataset of {}",
                    self.len()
                )));
            }
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let mut ds = Dataset::new(images, labels, self.image_shape, self.class_count, self.split)?;
        ds.preprocessor = self.preprocessor.clone();
        Ok(ds)
    }

    /// Seeded random subset of `n` samples (all of them when `n >= len`).
    pub fn random_subset(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let mut r = rng::stream(seed, &[purpose::SUBSET, self.split.code() as u64]);
        let mut idx = rand::seq::index::sample(&mut r, self.len(), n).into_vec();
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Carve a seeded random `fraction` off as the server's validation set.
    /// Returns `(train, val)`.
    pub fn split_validation(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction {fraction} outside [0, 1)"
            )));
        }
        let n_val = ((self.len() as f64) * fraction).round() as usize;
        if n_val == 0 || n_val >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "validation fraction {fraction} leaves an empty split"
            )));
        }
        let mut r = rng::stream(seed, &[purpose::VALIDATION_SPLIT]);
        let perm = rand::seq::index::sample(&mut r, self.len(), self.len()).into_vec();
        let mut val_idx = perm[..n_val].to_vec();
        let mut train_idx = perm[n_val..].to_vec();
        val_idx.sort_unstable();
        train_idx.sort_unstable();
        Ok((
            self.subset(&train_idx)?.with_split(Split::Train),
            self.subset(&val_idx)?.with_split(Split::Val),
        ))
    }

    /// Assemble a batch from sample indices.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Batch<T> {
        let n = self.image_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::of(v as f64)));
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.image_shape;
        Batch {
            images: Tensor::new(vec![indices.len(), c, h, w], data).expect("batch shape"),
            labels,
        }
    }
}
