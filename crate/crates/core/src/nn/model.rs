use crate::error::{Error, Result};
use crate::nn::norm::{self, NormOut, BN_MOMENTUM};
use crate::nn::real::{gemm, Mat};
use crate::nn::spec::{LayerSpec, Network, ParamSlot, ResolvedLayer};
use crate::nn::{Real, Tensor, WeightSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Cache<T> {
    Nothing,
    Conv { cols: Vec<T> },
    Output(Vec<T>),
    Input(Vec<T>),
    Norm { out: NormOut<T>, train: bool },
}

/// Result of a forward pass, holding what backward needs.
pub struct ForwardPass<T> {
    pub output: Tensor<T>,
    caches: Vec<Cache<T>>,
    layers: Vec<ResolvedLayer>,
    /// Updated batch-norm running statistics (train mode), keyed by weight
    /// index.
    pub running: Vec<(usize, Tensor<T>)>,
}

/// Parameter gradients aligned with a [`WeightSet`]. Buffer entries hold
/// zeros; new running statistics travel separately.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
    pub running: Vec<(usize, Tensor<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(weights: &WeightSet<T>) -> Self {
        Gradients {
            tensors: weights
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.tensor.shape().to_vec()))
                .collect(),
            running: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_finite())
    }
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [T]) {
    let (oh, ow) = (h + 2 * pad - k + 1, w + 2 * pad - k + 1);
    let p = oh * ow;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy + ki) as isize - pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &x[(ch * h + iy as usize) * w..(ch * h + iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox + kj) as isize - pad as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [T]) {
    let (oh, ow) = (h + 2 * pad - k + 1, w + 2 * pad - k + 1);
    let p = oh * ow;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ch * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx[base + ix as usize] = dx[base + ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn chw(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2])
}

impl Network {
    /// Run the network on a `[B, ...input_shape]` tensor.
    pub fn forward<T: Real>(
        &self,
        weights: &WeightSet<T>,
        input: &Tensor<T>,
        mode: Mode,
    ) -> Result<ForwardPass<T>> {
        let (layers, slots) = self.resolve()?;
        self.check_input(input)?;
        check_weights(&layers, &slots, weights)?;
        let batch = input.rows();
        let mut x = input.data().to_vec();
        let mut caches = Vec::with_capacity(layers.len());
        let mut running = Vec::new();
        for layer in &layers {
            let p = |i: usize| weights.tensor(layer.params[i]).data();
            let in_per: usize = layer.in_shape.iter().product();
            let out_per: usize = layer.out_shape.iter().product();
            let (y, cache) = match &layer.spec {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    let (c, h, w) = chw(&layer.in_shape);
                    let pcount = layer.out_shape[1] * layer.out_shape[2];
                    let ckk = c * kernel * kernel;
                    let (wt, bias) = (p(0), p(1));
                    let mut cols = vec![T::zero(); batch * ckk * pcount];
                    let mut y = vec![T::zero(); batch * out_per];
                    for n in 0..batch {
                        let col = &mut cols[n * ckk * pcount..(n + 1) * ckk * pcount];
                        im2col(&x[n * in_per..(n + 1) * in_per], c, h, w, *kernel, *padding, col);
                        let out = &mut y[n * out_per..(n + 1) * out_per];
                        for (oc, plane) in out.chunks_mut(pcount).enumerate() {
                            plane.iter_mut().for_each(|v| *v = bias[oc]);
                        }
                        gemm(
                            Mat::new(wt, *out_channels, ckk),
                            Mat::new(col, ckk, pcount),
                            out,
                            true,
                        );
                    }
                    (y, Cache::Conv { cols })
                }
                LayerSpec::AvgPool2d { size } => {
                    let (c, h, w) = chw(&layer.in_shape);
                    let (oh, ow) = (layer.out_shape[1], layer.out_shape[2]);
                    let inv = T::of(1.0 / (size * size) as f64);
                    let mut y = vec![T::zero(); batch * out_per];
                    for n in 0..batch {
                        for ch in 0..c {
                            let src = &x[n * in_per + ch * h * w..];
                            let dst = &mut y[n * out_per + ch * oh * ow..];
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let mut acc = T::zero();
                                    for dy in 0..*size {
                                        for dx in 0..*size {
                                            acc = acc + src[(oy * size + dy) * w + ox * size + dx];
                                        }
                                    }
                                    dst[oy * ow + ox] = acc * inv;
                                }
                            }
                        }
                    }
                    (y, Cache::Nothing)
                }
                LayerSpec::Relu => {
                    let y: Vec<T> = x.iter().map(|&v| v.max(T::zero())).collect();
                    (y.clone(), Cache::Output(y))
                }
                LayerSpec::LeakyRelu { slope } => {
                    let s = T::of(*slope);
                    let y = x
                        .iter()
                        .map(|&v| if v > T::zero() { v } else { v * s })
                        .collect();
                    (y, Cache::Input(std::mem::take(&mut x)))
                }
                LayerSpec::Tanh => {
                    let y: Vec<T> = x.iter().map(|v| v.tanh()).collect();
                    (y.clone(), Cache::Output(y))
                }
                LayerSpec::Sigmoid => {
                    let y: Vec<T> = x
                        .iter()
                        .map(|&v| T::one() / (T::one() + (-v).exp()))
                        .collect();
                    (y.clone(), Cache::Output(y))
                }
                LayerSpec::BatchNorm => {
                    let dims = (batch, layer.in_shape[0], in_per / layer.in_shape[0]);
                    let (scale, shift) = (p(0), p(1));
                    match mode {
                        Mode::Train => {
                            let (out, mean, var) = norm::bn_train(&x, dims, scale, shift);
                            let m = BN_MOMENTUM;
                            for (slot, batch_stat) in [(2, mean), (3, var)] {
                                let idx = layer.params[slot];
                                let old = weights.tensor(idx);
                                let data = old
                                    .data()
                                    .iter()
                                    .zip(&batch_stat)
                                    .map(|(r, s)| T::of((1.0 - m) * r.f64() + m * s))
                                    .collect();
                                running.push((idx, Tensor::new(old.shape().to_vec(), data)?));
                            }
                            (out.y.clone(), Cache::Norm { out, train: true })
                        }
                        Mode::Eval => {
                            let stats = norm::RunningStats {
                                mean: p(2).to_vec(),
                                var: p(3).to_vec(),
                            };
                            let out = norm::bn_eval(&x, dims, scale, shift, &stats);
                            (out.y.clone(), Cache::Norm { out, train: false })
                        }
                    }
                }
                LayerSpec::GroupNorm { groups } => {
                    let dims = (batch, layer.in_shape[0], in_per / layer.in_shape[0]);
                    let out = norm::gn_forward(&x, dims, *groups, p(0), p(1));
                    (out.y.clone(), Cache::Norm { out, train: true })
                }
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                    (std::mem::take(&mut x), Cache::Nothing)
                }
                LayerSpec::Dense { out_features } => {
                    let (wt, bias) = (p(0), p(1));
                    let mut y = Vec::with_capacity(batch * out_features);
                    for _ in 0..batch {
                        y.extend_from_slice(bias);
                    }
                    gemm(
                        Mat::new(&x, batch, in_per),
                        Mat::t(wt, *out_features, in_per),
                        &mut y,
                        true,
                    );
                    (y, Cache::Input(std::mem::take(&mut x)))
                }
                LayerSpec::Upsample2d { factor } => {
                    let (c, h, w) = chw(&layer.in_shape);
                    let (oh, ow) = (h * factor, w * factor);
                    let mut y = vec![T::zero(); batch * out_per];
                    for n in 0..batch {
                        for ch in 0..c {
                            let src = &x[n * in_per + ch * h * w..];
                            let dst = &mut y[n * out_per + ch * oh * ow..];
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    dst[oy * ow + ox] = src[(oy / factor) * w + ox / factor];
                                }
                            }
                        }
                    }
                    (y, Cache::Nothing)
                }
            };
            caches.push(cache);
            x = y;
        }
        let mut out_shape = vec![batch];
        out_shape.extend(
            layers
                .last()
                .map(|l| l.out_shape.clone())
                .unwrap_or_else(|| self.input_shape.clone()),
        );
        Ok(ForwardPass {
            output: Tensor::new(out_shape, x)?,
            caches,
            layers,
            running,
        })
    }

    /// Back-propagate `doutput` through a recorded pass. The input gradient
    /// is only computed when `want_input_grad` is set.
    pub fn backward<T: Real>(
        &self,
        weights: &WeightSet<T>,
        pass: &ForwardPass<T>,
        doutput: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<(Gradients<T>, Option<Tensor<T>>)> {
        if doutput.shape() != pass.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                doutput.shape(),
                pass.output.shape()
            )));
        }
        let batch = pass.output.rows();
        let mut grads = Gradients::zeros_like(weights);
        grads.running = pass.running.clone();
        let mut dy = doutput.data().to_vec();
        for (li, (layer, cache)) in pass.layers.iter().zip(&pass.caches).enumerate().rev() {
            let need_dx = want_input_grad || li > 0;
            let p = |i: usize| weights.tensor(layer.params[i]).data();
            let in_per: usize = layer.in_shape.iter().product();
            let out_per: usize = layer.out_shape.iter().product();
            let dx: Vec<T> = match (&layer.spec, cache) {
                (
                    LayerSpec::Conv2d {
                        out_channels,
                        kernel,
                        padding,
                    },
                    Cache::Conv { cols },
                ) => {
                    let (c, h, w) = chw(&layer.in_shape);
                    let pcount = layer.out_shape[1] * layer.out_shape[2];
                    let ckk = c * kernel * kernel;
                    let wt = p(0);
                    let mut dx = if need_dx {
                        vec![T::zero(); batch * in_per]
                    } else {
                        Vec::new()
                    };
                    let mut dcols = vec![T::zero(); ckk * pcount];
                    let (gw_idx, gb_idx) = (layer.params[0], layer.params[1]);
                    for n in 0..batch {
                        let d = &dy[n * out_per..(n + 1) * out_per];
                        let col = &cols[n * ckk * pcount..(n + 1) * ckk * pcount];
                        gemm(
                            Mat::new(d, *out_channels, pcount),
                            Mat::t(col, ckk, pcount),
                            grads.tensors[gw_idx].data_mut(),
                            true,
                        );
                        let gb = grads.tensors[gb_idx].data_mut();
                        for (oc, plane) in d.chunks(pcount).enumerate() {
                            gb[oc] = gb[oc] + plane.iter().copied().sum::<T>();
                        }
                        if need_dx {
                            gemm(
                                Mat::t(wt, *out_channels, ckk),
                                Mat::new(d, *out_channels, pcount),
                                &mut dcols,
                                false,
                            );
                            col2im(
                                &dcols,
                                c,
                                h,
                                w,
                                *kernel,
                                *padding,
                                &mut dx[n * in_per..(n + 1) * in_per],
                            );
                        }
                    }
                    dx
                }
                (LayerSpec::AvgPool2d { size }, _) => {
                    let (c, h, w) = chw(&layer.in_shape);
                    let (oh, ow) = (layer.out_shape[1], layer.out_shape[2]);
                    let inv = T::of(1.0 / (size * size) as f64);
                    let mut dx = vec![T::zero(); batch * in_per];
                    for n in 0..batch {
                        for ch in 0..c {
                            let src = &dy[n * out_per + ch * oh * ow..];
                            let dst = &mut dx[n * in_per + ch * h * w..];
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let g = src[oy * ow + ox] * inv;
                                    for a in 0..*size {
                                        for b in 0..*size {
                                            dst[(oy * size + a) * w + ox * size + b] = g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    dx
                }
                (LayerSpec::Relu, Cache::Output(y)) => dy
                    .iter()
                    .zip(y)
                    .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
                    .collect(),
                (LayerSpec::LeakyRelu { slope }, Cache::Input(xin)) => {
                    let s = T::of(*slope);
                    dy.iter()
                        .zip(xin)
                        .map(|(&g, &v)| if v > T::zero() { g } else { g * s })
                        .collect()
                }
                (LayerSpec::Tanh, Cache::Output(y)) => dy
                    .iter()
                    .zip(y)
                    .map(|(&g, &o)| g * (T::one() - o * o))
                    .collect(),
                (LayerSpec::Sigmoid, Cache::Output(y)) => dy
                    .iter()
                    .zip(y)
                    .map(|(&g, &o)| g * o * (T::one() - o))
                    .collect(),
                (LayerSpec::BatchNorm, Cache::Norm { out, train }) => {
                    let dims = (batch, layer.in_shape[0], in_per / layer.in_shape[0]);
                    let (dx, dscale, dshift) = norm::bn_backward(&dy, out, dims, p(0), *train);
                    add_into(&mut grads.tensors[layer.params[0]], &dscale);
                    add_into(&mut grads.tensors[layer.params[1]], &dshift);
                    dx
                }
                (LayerSpec::GroupNorm { groups }, Cache::Norm { out, .. }) => {
                    let dims = (batch, layer.in_shape[0], in_per / layer.in_shape[0]);
                    let (dx, dscale, dshift) = norm::gn_backward(&dy, out, dims, *groups, p(0));
                    add_into(&mut grads.tensors[layer.params[0]], &dscale);
                    add_into(&mut grads.tensors[layer.params[1]], &dshift);
                    dx
                }
                (LayerSpec::Flatten | LayerSpec::Reshape { .. }, _) => std::mem::take(&mut dy),
                (LayerSpec::Dense { out_features }, Cache::Input(xin)) => {
                    gemm(
                        Mat::t(&dy, batch, *out_features),
                        Mat::new(xin, batch, in_per),
                        grads.tensors[layer.params[0]].data_mut(),
                        true,
                    );
                    let gb = grads.tensors[layer.params[1]].data_mut();
                    for row in dy.chunks(*out_features) {
                        for (g, &d) in gb.iter_mut().zip(row) {
                            *g = *g + d;
                        }
                    }
                    if need_dx {
                        let mut dx = vec![T::zero(); batch * in_per];
                        gemm(
                            Mat::new(&dy, batch, *out_features),
                            Mat::new(p(0), *out_features, in_per),
                            &mut dx,
                            false,
                        );
                        dx
                    } else {
                        Vec::new()
                    }
                }
                (LayerSpec::Upsample2d { factor }, _) => {
                    let (c, h, w) = chw(&layer.in_shape);
                    let (oh, ow) = (h * factor, w * factor);
                    let mut dx = vec![T::zero(); batch * in_per];
                    for n in 0..batch {
                        for ch in 0..c {
                            let src = &dy[n * out_per + ch * oh * ow..];
                            let dst = &mut dx[n * in_per + ch * h * w..];
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let i = (oy / factor) * w + ox / factor;
                                    dst[i] = dst[i] + src[oy * ow + ox];
                                }
                            }
                        }
                    }
                    dx
                }
                (spec, _) => {
                    return Err(Error::Model(format!(
                        "layer {li} ({}) has no matching forward cache",
                        spec.kind()
                    )))
                }
            };
            dy = dx;
        }
        let input_grad = if want_input_grad {
            let mut shape = vec![batch];
            shape.extend_from_slice(&self.input_shape);
            Some(Tensor::new(shape, dy)?)
        } else {
            None
        };
        Ok((grads, input_grad))
    }

    fn check_input<T: Real>(&self, input: &Tensor<T>) -> Result<()> {
        let got = input.shape();
        if got.len() != self.input_shape.len() + 1 || got[1..] != self.input_shape[..] || got[0] == 0
        {
            let mut expected = vec![got.first().copied().unwrap_or(1).max(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::LayerShape {
                layer: 0,
                kind: self.layers.first().map(|l| l.kind()).unwrap_or("input"),
                expected,
                got: got.to_vec(),
            });
        }
        Ok(())
    }
}

fn check_weights<T: Real>(
    layers: &[ResolvedLayer],
    slots: &[ParamSlot],
    weights: &WeightSet<T>,
) -> Result<()> {
    for (li, layer) in layers.iter().enumerate() {
        for &idx in &layer.params {
            let slot = &slots[idx];
            match weights.entries().get(idx) {
                Some(e) if e.name == slot.name && e.tensor.shape() == slot.shape.as_slice() => {}
                found => {
                    return Err(Error::LayerShape {
                        layer: li,
                        kind: layer.spec.kind(),
                        expected: slot.shape.clone(),
                        got: found.map(|e| e.tensor.shape().to_vec()).unwrap_or_default(),
                    })
                }
            }
        }
    }
    if weights.len() != slots.len() {
        return Err(Error::Shape(format!(
            "network has {} parameter tensors, weight set has {}",
            slots.len(),
            weights.len()
        )));
    }
    Ok(())
}

fn add_into<T: Real>(t: &mut Tensor<T>, v: &[T]) {
    for (a, &b) in t.data_mut().iter_mut().zip(v) {
        *a = *a + b;
    }
}
