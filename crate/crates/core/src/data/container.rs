//! Versioned binary containers for datasets (`FSD1`) and partitions
//! (`FSP1`). All integers are little-endian u32, pixels f32.

use std::path::Path;

use serde::Serialize;

use crate::data::{Dataset, Partition, Preprocessor, Split};
use crate::error::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"FSD1";
const PARTITION_MAGIC: &[u8; 4] = b"FSP1";

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::Format(format!("{v} does not fit a u32 field")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Format(format!("{} ends at byte {} of {} needed", self.what, self.bytes.len(), self.at + n))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        if self.take(4)? != m {
            return Err(Error::Format(format!("{} magic missing", self.what)));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} has {} trailing bytes",
                self.what,
                self.bytes.len() - self.at
            )));
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Layout: magic, split code (u8), preprocessor as length-prefixed JSON,
/// class count, C, H, W, N, N labels, N·C·H·W pixels.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = Writer(Vec::with_capacity(64 + ds.images().len() * 4));
    w.0.extend_from_slice(DATASET_MAGIC);
    w.0.push(ds.split().code());
    let pre = serde_json::to_vec(ds.preprocessor()).map_err(|e| Error::Format(e.to_string()))?;
    w.u32(pre.len())?;
    w.0.extend_from_slice(&pre);
    w.u32(ds.class_count())?;
    for d in ds.image_shape() {
        w.u32(d)?;
    }
    w.u32(ds.len())?;
    for &l in ds.labels() {
        w.u32(l)?;
    }
    for v in ds.images() {
        w.0.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &w.0)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, at: 0, what: "FSD1 container" };
    r.magic(DATASET_MAGIC)?;
    let split = Split::from_code(r.take(1)?[0])
        .ok_or_else(|| Error::Format("unknown split code".into()))?;
    let pre_len = r.u32()?;
    let pre: Preprocessor =
        serde_json::from_slice(r.take(pre_len)?).map_err(|e| Error::Format(e.to_string()))?;
    let class_count = r.u32()?;
    let shape = [r.u32()?, r.u32()?, r.u32()?];
    let n = r.u32()?;
    let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let pixels = n * shape.iter().product::<usize>();
    let images = r
        .take(pixels * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    r.finish()?;
    let mut ds = Dataset::new(images, labels, shape, class_count, split)?;
    ds.set_preprocessor(pre);
    Ok(ds)
}

/// Layout: magic, class count, client count, then per client its index
/// count, indices and K histogram entries.
pub fn write_partition(p: &Partition, path: &Path) -> Result<()> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(PARTITION_MAGIC);
    w.u32(p.class_count)?;
    w.u32(p.n_clients())?;
    for (idx, hist) in p.assignments.iter().zip(&p.histograms) {
        w.u32(idx.len())?;
        for &i in idx {
            w.u32(i)?;
        }
        for &h in hist {
            w.u32(h)?;
        }
    }
    write_file(path, &w.0)
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, at: 0, what: "FSP1 container" };
    r.magic(PARTITION_MAGIC)?;
    let class_count = r.u32()?;
    let clients = r.u32()?;
    let mut assignments = Vec::with_capacity(clients);
    let mut histograms = Vec::with_capacity(clients);
    for k in 0..clients {
        let n = r.u32()?;
        assignments.push((0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?);
        let hist = (0..class_count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if hist.iter().sum::<usize>() != n {
            return Err(Error::Format(format!("client {k}: histogram does not sum to {n}")));
        }
        histograms.push(hist);
    }
    r.finish()?;
    Ok(Partition { assignments, histograms, class_count })
}

#[derive(Serialize)]
struct ClientSummary<'a> {
    client: usize,
    samples: usize,
    dominant_share: f64,
    histogram: &'a [usize],
}

#[derive(Serialize)]
struct PartitionSummary<'a> {
    class_count: usize,
    clients: Vec<ClientSummary<'a>>,
}

/// Human-readable per-client histogram listing.
pub fn write_histogram_sidecar(p: &Partition, path: &Path) -> Result<()> {
    let summary = PartitionSummary {
        class_count: p.class_count,
        clients: p
            .histograms
            .iter()
            .enumerate()
            .map(|(k, h)| ClientSummary {
                client: k,
                samples: p.assignments[k].len(),
                dominant_share: p.dominant_share(k),
                histogram: h,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, text.as_bytes())
}
