//! CIFAR-10 binary batches: one label byte followed by 3072 channel-major pixels.

use std::path::{Path, PathBuf};

use bntt_core::network::Dataset;
use bntt_core::Tensor;

use crate::error::{DataError, Result};

pub const RECORD_BYTES: usize = 1 + 3 * 32 * 32;
pub const RECORDS_PER_BATCH: usize = 10_000;
pub const CLASSES: usize = 10;

/// Decodes whole records; `images` receives pixels scaled by 1/255.
pub fn parse_cifar_records(bytes: &[u8], what: &str, images: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(DataError::format(
            what,
            format!(
                "{} bytes is not a multiple of the {RECORD_BYTES}-byte record",
                bytes.len()
            ),
        ));
    }
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let y = usize::from(rec[0]);
        if y >= CLASSES {
            return Err(DataError::format(
                what,
                format!("label {y} of record {i} is out of range"),
            ));
        }
        labels.push(y);
        images.extend(rec[1..].iter().map(|&b| f32::from(b) / 255.0));
    }
    Ok(())
}

fn batch_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// True if `dir` looks like an extracted CIFAR-10 binary distribution.
pub fn is_cifar10_dir(dir: &Path) -> bool {
    batch_dir(dir).join("test_batch.bin").is_file()
}

/// Loads `data_batch_1..5.bin` (train) or `test_batch.bin` in file order.
pub fn load_cifar10(dir: &Path, train: bool) -> Result<Dataset<f32>> {
    let dir = batch_dir(dir);
    let files: Vec<PathBuf> = if train {
        (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
    } else {
        vec![dir.join("test_batch.bin")]
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for f in &files {
        let bytes = std::fs::read(f).map_err(|e| DataError::io(f, e))?;
        parse_cifar_records(&bytes, &f.display().to_string(), &mut images, &mut labels)?;
    }
    let n = labels.len();
    Ok(Dataset::new(
        Tensor::from_vec(&[n, 3, 32, 32], images)?,
        labels,
        CLASSES,
    )?)
}
