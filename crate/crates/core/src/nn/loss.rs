use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

/// Row-wise softmax of `[B, D]` logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let d = logits.len() / logits.rows().max(1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(d.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Class-weighted cross-entropy, mean-reduced over the batch:
/// `loss = (1/B) Σ_i w[y_i] · (−log softmax(z_i)[y_i])`.
///
/// Returns the loss and its exact gradient with respect to the logits.
pub fn cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
    class_weights: &[T],
) -> Result<(T, Tensor<T>)> {
    let b = logits.rows();
    if logits.shape().len() != 2 || b != labels.len() || b == 0 {
        return Err(Error::Shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let d = logits.shape()[1];
    if class_weights.len() != d {
        return Err(Error::InvalidArgument(format!(
            "{} class weights for {d} logits",
            class_weights.len()
        )));
    }
    if let Some(w) = class_weights.iter().find(|w| !(**w >= T::zero())) {
        return Err(Error::InvalidArgument(format!(
            "class weight {w} is negative"
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= d) {
        return Err(Error::InvalidArgument(format!(
            "label {y} outside {d} outputs"
        )));
    }
    let probs = softmax(logits);
    let inv_b = T::one() / T::of(b as f64);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        let w = class_weights[y];
        loss = loss + w * (lse - row[y]);
        let g = &mut grad.data_mut()[i * d..(i + 1) * d];
        g[y] = g[y] - T::one();
        for v in g.iter_mut() {
            *v = *v * w * inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
