//! Batch and group normalisation kernels on `[B, C, S]` layouts, where `S`
//! is the flattened spatial extent (1 for dense features).

use crate::error::{Error, Result};
use crate::nn::{Mode, Real, Tensor};

/// Added to every variance before the square root.
pub const NORM_EPS: f64 = 1e-5;
/// Weight of the current batch in the running-statistic update.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

pub(crate) struct NormOut<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    /// Per channel (batch norm) or per (sample, group) (group norm).
    pub invstd: Vec<T>,
}

fn bcs(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Shape(format!(
            "normalisation needs [B, C, ...], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Training-mode batch norm. Returns the output plus the batch mean and the
/// unbiased batch variance for the running-statistic update.
pub(crate) fn bn_train<T: Real>(
    x: &[T],
    (b, c, s): (usize, usize, usize),
    scale: &[T],
    shift: &[T],
) -> (NormOut<T>, Vec<f64>, Vec<f64>) {
    let m = (b * s) as f64;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut invstd = vec![T::zero(); c];
    let mut means = vec![0.0; c];
    let mut unbiased = vec![0.0; c];
    for ch in 0..c {
        let values = || (0..b).flat_map(move |n| x[(n * c + ch) * s..(n * c + ch + 1) * s].iter());
        let mean = values().map(|v| v.f64()).sum::<f64>() / m;
        let var = values().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / m;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        means[ch] = mean;
        unbiased[ch] = if m > 1.0 { var * m / (m - 1.0) } else { var };
        invstd[ch] = T::of(inv);
        let (g, beta) = (scale[ch], shift[ch]);
        let (mean_t, inv_t) = (T::of(mean), T::of(inv));
        for n in 0..b {
            let base = (n * c + ch) * s;
            for i in base..base + s {
                let xh = (x[i] - mean_t) * inv_t;
                xhat[i] = xh;
                y[i] = g * xh + beta;
            }
        }
    }
    (NormOut { y, xhat, invstd }, means, unbiased)
}

pub(crate) fn bn_eval<T: Real>(
    x: &[T],
    (b, c, s): (usize, usize, usize),
    scale: &[T],
    shift: &[T],
    stats: &RunningStats<T>,
) -> NormOut<T> {
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let invstd: Vec<T> = stats
        .var
        .iter()
        .map(|v| T::of(1.0 / (v.f64() + NORM_EPS).sqrt()))
        .collect();
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * s;
            for i in base..base + s {
                let xh = (x[i] - stats.mean[ch]) * invstd[ch];
                xhat[i] = xh;
                y[i] = scale[ch] * xh + shift[ch];
            }
        }
    }
    NormOut { y, xhat, invstd }
}

/// Gradients of batch norm. `train` selects whether batch statistics
/// depended on the input.
pub(crate) fn bn_backward<T: Real>(
    dy: &[T],
    cache: &NormOut<T>,
    (b, c, s): (usize, usize, usize),
    scale: &[T],
    train: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::of((b * s) as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dscale = vec![T::zero(); c];
    let mut dshift = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for n in 0..b {
            let base = (n * c + ch) * s;
            for i in base..base + s {
                sum_dy = sum_dy + dy[i];
                sum_dy_xhat = sum_dy_xhat + dy[i] * cache.xhat[i];
            }
        }
        dscale[ch] = sum_dy_xhat;
        dshift[ch] = sum_dy;
        let k = scale[ch] * cache.invstd[ch];
        for n in 0..b {
            let base = (n * c + ch) * s;
            for i in base..base + s {
                dx[i] = if train {
                    k / m * (m * dy[i] - sum_dy - cache.xhat[i] * sum_dy_xhat)
                } else {
                    k * dy[i]
                };
            }
        }
    }
    (dx, dscale, dshift)
}

pub(crate) fn gn_forward<T: Real>(
    x: &[T],
    (b, c, s): (usize, usize, usize),
    groups: usize,
    scale: &[T],
    shift: &[T],
) -> NormOut<T> {
    let per = c / groups;
    let span = per * s;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut invstd = vec![T::zero(); b * groups];
    for n in 0..b {
        for g in 0..groups {
            let start = (n * c + g * per) * s;
            let block = &x[start..start + span];
            let mean = block.iter().map(|v| v.f64()).sum::<f64>() / span as f64;
            let var = block.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / span as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            invstd[n * groups + g] = T::of(inv);
            let (mean_t, inv_t) = (T::of(mean), T::of(inv));
            for (j, i) in (start..start + span).enumerate() {
                let ch = g * per + j / s;
                let xh = (x[i] - mean_t) * inv_t;
                xhat[i] = xh;
                y[i] = scale[ch] * xh + shift[ch];
            }
        }
    }
    NormOut { y, xhat, invstd }
}

pub(crate) fn gn_backward<T: Real>(
    dy: &[T],
    cache: &NormOut<T>,
    (b, c, s): (usize, usize, usize),
    groups: usize,
    scale: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let per = c / groups;
    let span = per * s;
    let m = T::of(span as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dscale = vec![T::zero(); c];
    let mut dshift = vec![T::zero(); c];
    for n in 0..b {
        for g in 0..groups {
            let start = (n * c + g * per) * s;
            let mut sum = T::zero();
            let mut sum_xhat = T::zero();
            for (j, i) in (start..start + span).enumerate() {
                let ch = g * per + j / s;
                dscale[ch] = dscale[ch] + dy[i] * cache.xhat[i];
                dshift[ch] = dshift[ch] + dy[i];
                let dxh = dy[i] * scale[ch];
                sum = sum + dxh;
                sum_xhat = sum_xhat + dxh * cache.xhat[i];
            }
            let inv = cache.invstd[n * groups + g];
            for (j, i) in (start..start + span).enumerate() {
                let ch = g * per + j / s;
                let dxh = dy[i] * scale[ch];
                dx[i] = inv / m * (m * dxh - sum - cache.xhat[i] * sum_xhat);
            }
        }
    }
    (dx, dscale, dshift)
}

/// Batch normalisation of `[B, C, ...]` input. In training mode batch
/// statistics are used and `running` is updated with `momentum`; in eval
/// mode `running` is used as-is.
pub fn batch_norm<T: Real>(
    x: &Tensor<T>,
    scale: &[T],
    shift: &[T],
    running: &mut RunningStats<T>,
    mode: Mode,
    momentum: f64,
) -> Result<Tensor<T>> {
    let dims = bcs(x.shape())?;
    check_channels(dims.1, &[scale.len(), shift.len(), running.mean.len(), running.var.len()])?;
    let y = match mode {
        Mode::Train => {
            let (out, mean, var) = bn_train(x.data(), dims, scale, shift);
            for ch in 0..dims.1 {
                running.mean[ch] =
                    T::of((1.0 - momentum) * running.mean[ch].f64() + momentum * mean[ch]);
                running.var[ch] =
                    T::of((1.0 - momentum) * running.var[ch].f64() + momentum * var[ch]);
            }
            out.y
        }
        Mode::Eval => bn_eval(x.data(), dims, scale, shift, running).y,
    };
    Tensor::new(x.shape().to_vec(), y)
}

/// Group normalisation of `[B, C, ...]` input; identical in train and eval.
pub fn group_norm<T: Real>(
    x: &Tensor<T>,
    scale: &[T],
    shift: &[T],
    groups: usize,
) -> Result<Tensor<T>> {
    let dims = bcs(x.shape())?;
    check_channels(dims.1, &[scale.len(), shift.len()])?;
    if groups == 0 || dims.1 % groups != 0 {
        return Err(Error::InvalidArgument(format!(
            "{groups} groups do not divide {} channels",
            dims.1
        )));
    }
    Tensor::new(
        x.shape().to_vec(),
        gn_forward(x.data(), dims, groups, scale, shift).y,
    )
}

fn check_channels(c: usize, lens: &[usize]) -> Result<()> {
    if lens.iter().any(|&l| l != c) {
        return Err(Error::Shape(format!(
            "per-channel parameters {lens:?} do not match {c} channels"
        )));
    }
    Ok(())
}
