use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

/// One label byte followed by a 32×32 red plane, then green, then blue.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
const RECORDS_PER_FILE: usize = 10_000;
const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

/// Parse one CIFAR-10 binary batch file. The whole file must consist of
/// complete records; nothing is returned for a truncated file.
pub fn read_cifar_batch(path: &Path) -> Result<(Vec<f32>, Vec<usize>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let whole = bytes.len().div_ceil(CIFAR_RECORD_BYTES).max(1);
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: (whole * CIFAR_RECORD_BYTES) as u64,
            found: bytes.len() as u64,
        });
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut images = Vec::with_capacity(n * (CIFAR_RECORD_BYTES - 1));
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::Format(format!(
                "{}: label byte {label} is not a CIFAR-10 class",
                path.display()
            )));
        }
        labels.push(label);
        images.extend(rec[1..].iter().map(|&b| b as f32));
    }
    Ok((images, labels))
}

fn read_split(dir: &Path, files: &[&str], split: Split) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let path = dir.join(name);
        let meta = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
        let expected = (RECORDS_PER_FILE * CIFAR_RECORD_BYTES) as u64;
        if meta.len() != expected {
            return Err(Error::Truncated {
                path,
                expected,
                found: meta.len(),
            });
        }
        let (img, lab) = read_cifar_batch(&path)?;
        images.extend(img);
        labels.extend(lab);
    }
    Dataset::new(images, labels, [3, 32, 32], 10, split)
}

/// Load the standard binary distribution (`data_batch_{1..5}.bin`,
/// `test_batch.bin`): 50000 training and 10000 test images.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = read_split(dir, &TRAIN_FILES, Split::Train)?;
    let test = read_split(dir, &[TEST_FILE], Split::Test)?;
    Ok((train, test))
}

/// Load every file under `dir` as headerless planar RGB records of
/// `3 × height × width` bytes, as an unlabelled (single-class) image pool.
pub fn load_raw_images(dir: &Path, height: usize, width: usize) -> Result<Dataset> {
    let record = 3 * height * width;
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut images = Vec::new();
    for path in files {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() % record != 0 {
            return Err(Error::Truncated {
                expected: (bytes.len().div_ceil(record) * record) as u64,
                found: bytes.len() as u64,
                path,
            });
        }
        images.extend(bytes.iter().map(|&b| b as f32));
    }
    let n = images.len() / record;
    Dataset::new(images, vec![0; n], [3, height, width], 1, Split::Train)
}
