use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, purpose, StreamRng};

const POOL_SHUFFLE: u64 = 0;
const CLIENT_DRAW: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    #[serde(default = "PartitionSpec::default_clients")]
    pub n_clients: usize,
    pub alpha: f64,
    #[serde(default = "PartitionSpec::default_samples")]
    pub samples_per_client: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionSpec {
    fn default_clients() -> usize {
        20
    }

    fn default_samples() -> usize {
        2000
    }

    pub fn new(alpha: f64, seed: u64) -> Self {
        PartitionSpec {
            n_clients: Self::default_clients(),
            alpha,
            samples_per_client: Self::default_samples(),
            seed,
        }
    }

    pub fn validate(&self, available: usize) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Partition(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.n_clients == 0 || self.samples_per_client == 0 {
            return Err(Error::Partition(
                "n_clients and samples_per_client must be positive".into(),
            ));
        }
        let need = self.n_clients.checked_mul(self.samples_per_client);
        if need.is_none_or(|n| n > available) {
            return Err(Error::Partition(format!(
                "{} clients x {} samples exceeds the {available} available",
                self.n_clients, self.samples_per_client
            )));
        }
        Ok(())
    }
}

/// Disjoint per-client index lists into the source dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
    pub histograms: Vec<Vec<usize>>,
    pub class_count: usize,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    /// Checks disjointness, index range and histogram consistency.
    pub fn check(&self, labels: &[usize]) -> Result<()> {
        let mut seen = vec![false; labels.len()];
        for (k, (idx, hist)) in self.assignments.iter().zip(&self.histograms).enumerate() {
            let mut h = vec![0usize; self.class_count];
            for &i in idx {
                if i >= labels.len() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!(
                        "client {k}: index {i} out of range or shared"
                    )));
                }
                h[labels[i]] += 1;
            }
            if &h != hist {
                return Err(Error::Partition(format!("client {k}: histogram mismatch")));
            }
        }
        Ok(())
    }

    /// Class proportions of client `k`.
    pub fn proportions(&self, k: usize) -> Vec<f64> {
        let h = &self.histograms[k];
        let n = h.iter().sum::<usize>().max(1) as f64;
        h.iter().map(|&c| c as f64 / n).collect()
    }

    /// Shannon entropy (nats) of client `k`'s class histogram.
    pub fn entropy(&self, k: usize) -> f64 {
        self.proportions(k)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// Largest single-class share of client `k`.
    pub fn dominant_share(&self, k: usize) -> f64 {
        self.proportions(k).into_iter().fold(0.0, f64::max)
    }
}

/// Draw from Dirichlet(α·1_k). Gamma(α) draws underflow for small α, so each
/// coordinate is taken in log space as `ln Gamma(α+1) + ln(U)/α` and the
/// simplex point is the softmax of those logs.
pub fn sample_dirichlet(alpha: f64, k: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("dirichlet over zero classes".into()));
    }
    let gamma = Gamma::new(alpha + 1.0, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("alpha {alpha}: {e}")))?;
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / alpha
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Split `total` into integer parts proportional to `weights` over the
/// `eligible` coordinates; remainders go to the largest fractional parts,
/// lowest index first on ties.
fn apportion(total: usize, weights: &[f64], eligible: &[bool]) -> Vec<usize> {
    let mass: f64 = weights.iter().zip(eligible).filter(|(_, &e)| e).map(|(w, _)| w).sum();
    let mut out = vec![0usize; weights.len()];
    if total == 0 || mass <= 0.0 {
        return out;
    }
    let mut fracs = Vec::new();
    let mut given = 0;
    for (c, (&w, &e)) in weights.iter().zip(eligible).enumerate() {
        if !e {
            continue;
        }
        let exact = total as f64 * w / mass;
        out[c] = exact.floor() as usize;
        given += out[c];
        fracs.push((exact - exact.floor(), c));
    }
    fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in fracs.iter().cycle().take(total.saturating_sub(given)) {
        out[c] += 1;
    }
    out
}

/// Per-class counts for one client: targets from its proportions, with any
/// shortfall in exhausted classes redistributed by the remaining mass of
/// classes that still have samples, and by availability once that mass is 0.
fn client_counts(p: &[f64], want: usize, avail: &[usize]) -> Result<Vec<usize>> {
    let all = vec![true; p.len()];
    let target = apportion(want, p, &all);
    let mut take: Vec<usize> = target.iter().zip(avail).map(|(&t, &a)| t.min(a)).collect();
    loop {
        let deficit = want - take.iter().sum::<usize>();
        if deficit == 0 {
            return Ok(take);
        }
        let open: Vec<bool> = take.iter().zip(avail).map(|(&t, &a)| t < a).collect();
        if !open.contains(&true) {
            return Err(Error::Partition(format!(
                "class pools exhausted with {deficit} samples still owed"
            )));
        }
        let mass: f64 = p.iter().zip(&open).filter(|(_, &o)| o).map(|(w, _)| w).sum();
        let extra = if mass > 0.0 {
            apportion(deficit, p, &open)
        } else {
            let room: Vec<f64> = take.iter().zip(avail).map(|(&t, &a)| (a - t) as f64).collect();
            apportion(deficit, &room, &open)
        };
        for ((t, e), a) in take.iter_mut().zip(extra).zip(avail) {
            *t = (*t + e).min(*a);
        }
    }
}

/// Partition a label array. Client `k` draws its proportions from stream
/// `streams[k]`; clients are served in an order set by a priority drawn from
/// the same stream, so the multiset of histograms depends only on the set of
/// streams and not on which client id holds which.
pub fn dirichlet_partition_with_streams(
    labels: &[usize],
    class_count: usize,
    spec: &PartitionSpec,
    streams: &[u64],
) -> Result<Partition> {
    spec.validate(labels.len())?;
    if streams.len() != spec.n_clients {
        return Err(Error::Partition(format!(
            "{} streams for {} clients",
            streams.len(),
            spec.n_clients
        )));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        let pool = pools.get_mut(l).ok_or_else(|| {
            Error::Partition(format!("label {l} outside {class_count} classes"))
        })?;
        pool.push(i);
    }
    for (c, pool) in pools.iter_mut().enumerate() {
        pool.shuffle(&mut rng::stream(
            spec.seed,
            &[purpose::PARTITION, POOL_SHUFFLE, c as u64],
        ));
    }

    let mut draws = Vec::with_capacity(spec.n_clients);
    for (k, &s) in streams.iter().enumerate() {
        let mut r = rng::stream(spec.seed, &[purpose::PARTITION, CLIENT_DRAW, s]);
        let priority: u64 = r.random();
        let p = sample_dirichlet(spec.alpha, class_count, &mut r)?;
        draws.push((priority, s, k, p));
    }
    draws.sort_by_key(|d| (d.0, d.1));

    let mut cursor = vec![0usize; class_count];
    let mut assignments = vec![Vec::new(); spec.n_clients];
    let mut histograms = vec![Vec::new(); spec.n_clients];
    for (_, _, k, p) in draws {
        let avail: Vec<usize> = pools.iter().zip(&cursor).map(|(p, &c)| p.len() - c).collect();
        let counts = client_counts(&p, spec.samples_per_client, &avail)?;
        let mut idx = Vec::with_capacity(spec.samples_per_client);
        for (c, &n) in counts.iter().enumerate() {
            idx.extend_from_slice(&pools[c][cursor[c]..cursor[c] + n]);
            cursor[c] += n;
        }
        idx.sort_unstable();
        assignments[k] = idx;
        histograms[k] = counts;
    }
    Ok(Partition {
        assignments,
        histograms,
        class_count,
    })
}

/// Partition a label array with the identity client-to-stream assignment.
pub fn partition_labels(labels: &[usize], class_count: usize, spec: &PartitionSpec) -> Result<Partition> {
    let streams: Vec<u64> = (0..spec.n_clients as u64).collect();
    dirichlet_partition_with_streams(labels, class_count, spec, &streams)
}

pub fn dirichlet_partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    partition_labels(ds.labels(), ds.class_count(), spec)
}
