//! Minimal deterministic CNN engine.

mod loss;
mod model;
pub mod norm;
mod real;
mod spec;
mod tensor;
mod weights;

pub use loss::{argmax, cross_entropy, softmax};
pub use model::{ForwardPass, Gradients, Mode};
pub use norm::{batch_norm, group_norm, RunningStats, BN_MOMENTUM, NORM_EPS};
pub use real::Real;
pub use spec::{LayerSpec, ModelSpec, Network, NormKind, ParamInit, ParamSlot, LENET_CHANNELS};
pub use tensor::Tensor;
pub use weights::{init_weights, NamedTensor, WeightSet};

use crate::error::{Error, Result};

/// Images plus integer labels; label `K` denotes the unknown class.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        Ok(Batch { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Classifier logits `[B, K(+1)]`.
pub fn forward<T: Real>(
    spec: &ModelSpec,
    weights: &WeightSet<T>,
    batch: &Batch<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    Ok(spec.network.forward(weights, &batch.images, mode)?.output)
}

/// Training-mode forward and backward pass of the weighted cross-entropy.
pub fn backward<T: Real>(
    spec: &ModelSpec,
    weights: &WeightSet<T>,
    batch: &Batch<T>,
    class_weights: &[T],
) -> Result<(T, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let pass = spec.network.forward(weights, &batch.images, Mode::Train)?;
    let (loss, dlogits) = cross_entropy(&pass.output, &batch.labels, class_weights)?;
    let (grads, _) = spec.network.backward(weights, &pass, &dlogits, false)?;
    Ok((loss, grads))
}

/// `w ← w − lr·g` on trainable tensors; buffers take the new running
/// statistics carried by `grads`.
pub fn sgd_step<T: Real>(weights: &mut WeightSet<T>, grads: &Gradients<T>, lr: T) -> Result<()> {
    if grads.tensors.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} gradients for {} weights",
            grads.tensors.len(),
            weights.len()
        )));
    }
    for (entry, g) in weights.entries_mut().iter_mut().zip(&grads.tensors) {
        if entry.tensor.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for {} {:?}",
                g.shape(),
                entry.name,
                entry.tensor.shape()
            )));
        }
        if !entry.trainable {
            continue;
        }
        for (w, &d) in entry.tensor.data_mut().iter_mut().zip(g.data()) {
            *w = *w - lr * d;
        }
    }
    for (idx, stats) in &grads.running {
        let entry = weights
            .entries_mut()
            .get_mut(*idx)
            .ok_or_else(|| Error::Shape(format!("running statistic {idx} out of range")))?;
        entry.tensor = stats.clone();
    }
    Ok(())
}
