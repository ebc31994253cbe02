use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::fed::{RoundConfig, Variant};
use crate::fedos::{fedos_loss_weights, UnknownCache};
use crate::nn::{self, Batch, ModelSpec, Real, Tensor, WeightSet};
use crate::rng::{self, purpose};

/// One client's share of the training set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub id: usize,
    /// Indices into the shared training dataset.
    pub indices: Vec<usize>,
    /// Local label histogram `q_k`, length K.
    pub histogram: Vec<usize>,
    /// Generated unknown-class samples (FedOS only).
    pub unknown: Option<UnknownCache>,
}

impl ClientState {
    pub fn new(id: usize, indices: Vec<usize>, train: &Dataset) -> Result<Self> {
        let mut histogram = vec![0; train.class_count()];
        for &i in &indices {
            let &y = train.labels().get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("client {id}: index {i} outside training set"))
            })?;
            histogram[y] += 1;
        }
        Ok(ClientState {
            id,
            indices,
            histogram,
            unknown: None,
        })
    }

    pub fn from_partition(partition: &Partition, train: &Dataset) -> Result<Vec<Self>> {
        partition
            .assignments
            .iter()
            .enumerate()
            .map(|(k, idx)| ClientState::new(k, idx.clone(), train))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform choice without replacement of `max(1, round(C·n))` client ids,
/// returned sorted.
pub fn sample_clients(n_clients: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    if n_clients == 0 {
        return Vec::new();
    }
    let m = ((fraction * n_clients as f64).round() as usize).clamp(1, n_clients);
    let mut r = rng::stream(seed, &[purpose::CLIENT_SAMPLING, round as u64]);
    let mut ids = rand::seq::index::sample(&mut r, n_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Visiting order of a client's `n` local samples in one epoch.
pub fn epoch_order(seed: u64, round: usize, client: usize, epoch: usize, n: usize) -> Vec<usize> {
    let mut r = rng::stream(
        seed,
        &[purpose::LOCAL_SHUFFLE, round as u64, client as u64, epoch as u64],
    );
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    order
}

/// Per-class importance weights `p(y) / q(y)`, where `q` is the client
/// histogram with `smoothing` added to every count. Evaluated as
/// `p_y·(n + K·s) / (P·(q_y + s))` so identical proportions give exactly 1.
pub fn fedir_weights(client_hist: &[usize], global_counts: &[usize], smoothing: f64) -> Result<Vec<f64>> {
    if client_hist.len() != global_counts.len() {
        return Err(Error::InvalidArgument(format!(
            "client histogram has {} classes, global {}",
            client_hist.len(),
            global_counts.len()
        )));
    }
    let k = client_hist.len() as f64;
    let n: f64 = client_hist.iter().sum::<usize>() as f64;
    let total: f64 = global_counts.iter().sum::<usize>() as f64;
    if total == 0.0 {
        return Err(Error::InvalidArgument("global label distribution is empty".into()));
    }
    client_hist
        .iter()
        .zip(global_counts)
        .enumerate()
        .map(|(y, (&q, &p))| {
            let q = q as f64 + smoothing;
            if q == 0.0 {
                // class never seen locally: no local sample carries this weight
                return Ok(if p == 0 { 0.0 } else { 1.0 });
            }
            let w = (p as f64 * (n + k * smoothing)) / (total * q);
            if w.is_finite() {
                Ok(w)
            } else {
                Err(Error::InvalidArgument(format!("importance weight for class {y} is {w}")))
            }
        })
        .collect()
}

/// Result of one client's local training.
#[derive(Clone, Debug)]
pub struct LocalOutcome<T> {
    pub client: usize,
    pub weights: WeightSet<T>,
    /// Labelled local samples; the aggregation weight.
    pub samples: usize,
    /// Sample-weighted mean training loss over all local steps.
    pub mean_loss: f64,
}

/// Everything a client needs besides its own state.
pub struct LocalTask<'a> {
    pub spec: &'a ModelSpec,
    pub train: &'a Dataset,
    pub cfg: &'a RoundConfig,
    pub variant: &'a Variant,
    pub global_counts: &'a [usize],
    pub round: usize,
}

fn class_weights<T: Real>(task: &LocalTask, client: &ClientState) -> Result<Vec<T>> {
    let d = task.spec.output_dim();
    let k = task.spec.num_known_classes;
    let w: Vec<f64> = match task.variant {
        Variant::FedAvg | Variant::FedProx { .. } => vec![1.0; d],
        Variant::FedIr { smoothing } => {
            let mut w = fedir_weights(&client.histogram, task.global_counts, *smoothing)?;
            w.resize(d, 1.0);
            w
        }
        Variant::FedOs(u) => fedos_loss_weights(k, u.w_u)?,
    };
    Ok(w.into_iter().map(T::of).collect())
}

fn gather<T: Real>(
    train: &Dataset,
    client: &ClientState,
    cache: Option<&UnknownCache>,
    order: &[usize],
) -> Batch<T> {
    let [c, h, w] = train.image_shape();
    let n_local = client.indices.len();
    let mut data = Vec::with_capacity(order.len() * c * h * w);
    let mut labels = Vec::with_capacity(order.len());
    for &j in order {
        let (pixels, label) = match cache {
            Some(u) if j >= n_local => (u.image(j - n_local), u.label),
            _ => {
                let i = client.indices[j];
                (train.image(i), train.labels()[i])
            }
        };
        data.extend(pixels.iter().map(|&v| T::of(v as f64)));
        labels.push(label);
    }
    Batch {
        images: Tensor::new(vec![order.len(), c, h, w], data).expect("gathered batch shape"),
        labels,
    }
}

/// `E` epochs of mini-batch SGD from `global` on the client's data, plus its
/// unknown cache under FedOS.
pub fn local_train<T: Real>(
    task: &LocalTask,
    global: &WeightSet<T>,
    client: &ClientState,
) -> Result<LocalOutcome<T>> {
    if client.is_empty() {
        return Err(Error::InvalidArgument(format!("client {} has no data", client.id)));
    }
    let cfg = task.cfg;
    let weights_c = class_weights::<T>(task, client)?;
    let lr = T::of(cfg.lr);
    let mut w = global.clone();
    let mut loss_sum = 0.0;
    let mut seen = 0usize;
    for epoch in 0..cfg.local_epochs {
        let fresh;
        let cache = match task.variant {
            Variant::FedOs(u) if u.resample_per_epoch => {
                fresh = u.cache_for_epoch(task, client, epoch)?;
                Some(&fresh)
            }
            Variant::FedOs(_) => client.unknown.as_ref(),
            _ => None,
        };
        let n = client.len() + cache.map_or(0, |u| u.len());
        let order = epoch_order(cfg.seed, task.round, client.id, epoch, n);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather::<T>(task.train, client, cache, chunk);
            let (loss, mut grads) = nn::backward(task.spec, &w, &batch, &weights_c)?;
            if let Variant::FedProx { mu } = task.variant {
                let mu = T::of(*mu);
                for ((g, cur), base) in grads.tensors.iter_mut().zip(w.entries()).zip(global.entries()) {
                    if !cur.trainable {
                        continue;
                    }
                    for ((gv, &wv), &bv) in g.data_mut().iter_mut().zip(cur.tensor.data()).zip(base.tensor.data()) {
                        *gv = *gv + mu * (wv - bv);
                    }
                }
            }
            nn::sgd_step(&mut w, &grads, lr)?;
            loss_sum += loss.f64() * chunk.len() as f64;
            seen += chunk.len();
        }
    }
    Ok(LocalOutcome {
        client: client.id,
        weights: w,
        samples: client.len(),
        mean_loss: loss_sum / seen.max(1) as f64,
    })
}

/// Train the selected clients, in parallel or in sequence; results come back
/// in the order of `selected`.
pub(crate) fn train_selected<T: Real>(
    task: &LocalTask,
    global: &WeightSet<T>,
    clients: &[ClientState],
    selected: &[usize],
) -> Result<Vec<LocalOutcome<T>>> {
    if task.cfg.parallel {
        selected
            .par_iter()
            .map(|&k| local_train(task, global, &clients[k]))
            .collect()
    } else {
        selected
            .iter()
            .map(|&k| local_train(task, global, &clients[k]))
            .collect()
    }
}
