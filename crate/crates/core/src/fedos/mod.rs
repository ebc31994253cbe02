//! Open-set augmentation: an extra unknown class trained on generated
//! samples, weighted by `W_U`, and masked out at prediction time.

mod gan;
mod generator;

pub use gan::{discriminator_accuracy, train_generator, GanSpec, GanTraining, TinyGan};
pub use generator::{
    attach_unknown_caches, generate_unknown, write_raw_rgb, GaussianFit, Generator, UnknownCache,
};

use crate::error::{Error, Result};
use crate::fed::{ClientState, LocalTask};
use crate::nn::{argmax, Real};
use crate::rng::{self, purpose};

/// Per-class loss weights of length `K + 1`: 1 for known classes, `W_U`
/// for the unknown class.
pub fn fedos_loss_weights(k: usize, w_u: f64) -> Result<Vec<f64>> {
    if !(w_u.is_finite() && w_u >= 0.0) {
        return Err(Error::InvalidArgument(format!("W_U {w_u} must be >= 0")));
    }
    let mut w = vec![1.0; k + 1];
    w[k] = w_u;
    Ok(w)
}

/// Prediction over `K + 1` logits with the trailing unknown logit ignored.
pub fn mask_unknown<T: Real>(logits: &[T]) -> usize {
    argmax(&logits[..logits.len().saturating_sub(1).max(1)])
}

#[derive(Clone, Debug)]
pub struct UnknownConfig {
    /// Loss weight of the unknown class.
    pub w_u: f64,
    /// Generated samples per local sample.
    pub f_u: f64,
    pub generator: Generator,
    /// Draw a fresh cache every local epoch instead of once per client.
    pub resample_per_epoch: bool,
}

impl UnknownConfig {
    pub fn new(w_u: f64, f_u: f64, generator: Generator) -> Self {
        UnknownConfig {
            w_u,
            f_u,
            generator,
            resample_per_epoch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fedos_loss_weights(0, self.w_u)?;
        if !(self.f_u.is_finite() && self.f_u >= 0.0) {
            return Err(Error::InvalidArgument(format!("F_U {} must be >= 0", self.f_u)));
        }
        Ok(())
    }

    /// `round(F_U · n_local)`.
    pub fn unknown_count(&self, n_local: usize) -> usize {
        (self.f_u * n_local as f64).round() as usize
    }

    pub(crate) fn cache_for_epoch(
        &self,
        task: &LocalTask,
        client: &ClientState,
        epoch: usize,
    ) -> Result<UnknownCache> {
        let mut r = rng::stream(
            task.cfg.seed,
            &[
                purpose::UNKNOWN_CACHE,
                client.id as u64,
                task.round as u64,
                epoch as u64 + 1,
            ],
        );
        generator::generate_with(
            &self.generator,
            self.unknown_count(client.len()),
            &mut r,
            task.train,
            task.spec.num_known_classes,
        )
    }
}
