//! Benchmark fixtures shared by the criterion targets.

use fedos_core::data::{preprocess, synthesize_dataset, Dataset, Preprocessing};
use fedos_core::nn::NormKind;
use fedos_core::{ModelSpec, Result};

/// Standardized 32×32 synthetic training split.
pub fn standardized_images(classes: usize, n: usize, seed: u64) -> Result<Dataset> {
    let raw = synthesize_dataset(classes, n, 32, 32, seed)?;
    preprocess(&raw, Preprocessing::Standardized, None)
}

pub fn lenet(classes: usize, norm: NormKind) -> Result<ModelSpec> {
    ModelSpec::lenet5(32, 32, classes, &norm, false)
}
