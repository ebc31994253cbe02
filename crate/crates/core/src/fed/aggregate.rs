use crate::error::{Error, Result};
use crate::nn::{Real, Tensor, WeightSet};

/// A client's returned weights and its sample count.
#[derive(Clone, Debug)]
pub struct ClientUpdate<T> {
    pub client: usize,
    pub weights: WeightSet<T>,
    pub samples: usize,
}

/// `Σ n_k·w_k / Σ n_k` for every tensor, running statistics included.
/// Sums run in f64 in client-id order so the result is independent of how
/// updates were produced. Rounding may push a mean one ulp outside the
/// hull of the inputs, so each coordinate is clamped back into it.
pub fn aggregate<T: Real>(updates: &[ClientUpdate<T>]) -> Result<WeightSet<T>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::InvalidArgument("aggregate needs at least one update".into()))?;
    for u in updates {
        first.weights.check_aligned(&u.weights)?;
    }
    let total: usize = updates.iter().map(|u| u.samples).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("updates carry zero samples".into()));
    }
    let mut order: Vec<&ClientUpdate<T>> = updates.iter().collect();
    order.sort_by_key(|u| u.client);

    let mut entries = first.weights.entries().to_vec();
    for (t, entry) in entries.iter_mut().enumerate() {
        let n = entry.tensor.len();
        let mut acc = vec![0.0f64; n];
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for u in &order {
            let nk = u.samples as f64;
            for (j, v) in u.weights.tensor(t).data().iter().enumerate() {
                let v = v.f64();
                acc[j] += nk * v;
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let data = acc
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(a, (&l, &h))| {
                let mean = a / total as f64;
                // NaN inputs leave the hull empty
                T::of(if l <= h { mean.clamp(l, h) } else { mean })
            })
            .collect();
        entry.tensor = Tensor::new(entry.tensor.shape().to_vec(), data)?;
    }
    Ok(WeightSet::new(entries))
}
