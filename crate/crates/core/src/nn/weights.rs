use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::spec::{Network, ParamInit};
use crate::nn::{Real, Tensor};
use crate::rng::{self, purpose};

/// A named parameter or buffer of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Running statistics are buffers: averaged by the server, never
    /// touched by gradients.
    pub trainable: bool,
}

/// Ordered parameter collection of one network instance.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T> {
    entries: Vec<NamedTensor<T>>,
}

impl<T: Real> WeightSet<T> {
    pub fn new(entries: Vec<NamedTensor<T>>) -> Self {
        WeightSet { entries }
    }

    pub fn entries(&self) -> &[NamedTensor<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [NamedTensor<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.tensor)
    }

    pub fn tensor(&self, index: usize) -> &Tensor<T> {
        &self.entries[index].tensor
    }

    /// Total number of scalars (trainable and buffers).
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Same names, order and shapes.
    pub fn is_aligned_with<U: Real>(&self, other: &WeightSet<U>) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape())
    }

    pub fn check_aligned<U: Real>(&self, other: &WeightSet<U>) -> Result<()> {
        if self.is_aligned_with(other) {
            Ok(())
        } else {
            Err(Error::Shape("weight sets are not aligned".into()))
        }
    }

    /// Check that this set fits `network` exactly.
    pub fn check_network(&self, network: &Network) -> Result<()> {
        let (_, slots) = network.resolve()?;
        if slots.len() != self.entries.len() {
            return Err(Error::Shape(format!(
                "network has {} parameter tensors, weight set has {}",
                slots.len(),
                self.entries.len()
            )));
        }
        for (slot, e) in slots.iter().zip(&self.entries) {
            if slot.name != e.name || slot.shape != e.tensor.shape() {
                return Err(Error::Shape(format!(
                    "expected {} {:?}, found {} {:?}",
                    slot.name,
                    slot.shape,
                    e.name,
                    e.tensor.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> WeightSet<U> {
        WeightSet {
            entries: self
                .entries
                .iter()
                .map(|e| NamedTensor {
                    name: e.name.clone(),
                    tensor: e.tensor.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }

    /// Largest absolute elementwise difference over all tensors.
    pub fn max_abs_diff(&self, other: &WeightSet<T>) -> Result<f64> {
        self.check_aligned(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(a, b)| a.tensor.data().iter().zip(b.tensor.data()))
            .map(|(x, y)| (*x - *y).abs().f64())
            .fold(0.0, f64::max))
    }

    /// Serialise into the `FSW1` container (f32 payload).
    pub fn write_fsw(&self, out: &mut impl Write, meta: &[(String, String)]) -> Result<()> {
        write_fsw(self, out, meta).map_err(|e| Error::io("<fsw stream>", e))
    }

    /// Parse an `FSW1` container. Trainability is recovered from names.
    pub fn read_fsw(input: &mut impl Read) -> Result<(Self, Vec<(String, String)>)> {
        read_fsw(input)
    }

    pub fn save(&self, path: &std::path::Path, meta: &[(String, String)]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_fsw(self, &mut w, meta).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, Vec<(String, String)>)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_fsw(&mut std::io::BufReader::new(file))
    }
}

/// Fan-in scaled uniform initialisation, deterministic in `seed`.
/// Norm affine parameters start at (1, 0), running statistics at (0, 1).
pub fn init_weights<T: Real>(network: &Network, seed: u64) -> Result<WeightSet<T>> {
    let (_, slots) = network.resolve()?;
    let entries = slots
        .into_iter()
        .enumerate()
        .map(|(i, slot)| {
            let n: usize = slot.shape.iter().product();
            let data: Vec<T> = match slot.init {
                ParamInit::Zeros => vec![T::zero(); n],
                ParamInit::Ones => vec![T::one(); n],
                ParamInit::FanInUniform { fan_in } => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let mut rng = rng::stream(seed, &[purpose::INIT, i as u64]);
                    (0..n)
                        .map(|_| T::of(rng.random_range(-bound..bound)))
                        .collect()
                }
            };
            NamedTensor {
                name: slot.name,
                tensor: Tensor::new(slot.shape, data).expect("slot shape"),
                trainable: slot.trainable,
            }
        })
        .collect();
    Ok(WeightSet::new(entries))
}

const FSW_MAGIC: &[u8; 4] = b"FSW1";
/// Metadata records travel as empty rank-1 tensors with this name prefix.
const META_PREFIX: &str = "@meta:";

fn is_buffer_name(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

fn write_fsw<T: Real>(
    ws: &WeightSet<T>,
    out: &mut impl Write,
    meta: &[(String, String)],
) -> std::io::Result<()> {
    out.write_all(FSW_MAGIC)?;
    let count = ws.entries.len() + meta.len();
    out.write_all(&(count as u32).to_le_bytes())?;
    let mut record = |name: &str, shape: &[usize], payload: &[T]| -> std::io::Result<()> {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[shape.len() as u8])?;
        for &d in shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in payload {
            out.write_all(&(v.f64() as f32).to_le_bytes())?;
        }
        Ok(())
    };
    for (k, v) in meta {
        record(&format!("{META_PREFIX}{k}={v}"), &[0], &[])?;
    }
    for e in &ws.entries {
        record(&e.name, e.tensor.shape(), e.tensor.data())?;
    }
    Ok(())
}

fn read_fsw<T: Real>(input: &mut impl Read) -> Result<(WeightSet<T>, Vec<(String, String)>)> {
    fn take<const N: usize>(input: &mut impl Read, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        input
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("FSW1 stream ended while reading {what}")))?;
        Ok(buf)
    }
    if &take::<4>(input, "magic")? != FSW_MAGIC {
        return Err(Error::Format("missing FSW1 magic".into()));
    }
    let count = u32::from_le_bytes(take(input, "tensor count")?);
    let mut entries = Vec::new();
    let mut meta = Vec::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(input, "name length")?) as usize;
        let mut name = vec![0u8; name_len];
        input
            .read_exact(&mut name)
            .map_err(|_| Error::Format("FSW1 stream ended inside a name".into()))?;
        let name =
            String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = take::<1>(input, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(input, "dimension")?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        input
            .read_exact(&mut raw)
            .map_err(|_| Error::Format(format!("payload of {name} is truncated")))?;
        if let Some(kv) = name.strip_prefix(META_PREFIX) {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            meta.push((k.to_string(), v.to_string()));
            continue;
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        let trainable = !is_buffer_name(&name);
        entries.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
            trainable,
        });
    }
    Ok((WeightSet::new(entries), meta))
}
