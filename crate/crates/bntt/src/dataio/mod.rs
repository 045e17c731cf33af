//! Dataset files, checkpoints and run configuration.

pub mod checkpoint;
pub mod cifar;
pub mod config;
pub mod idx;

use std::path::Path;

use bntt_core::network::Dataset;

use crate::error::{DataError, Result};

/// Which dataset a directory holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mnist" => Some(DatasetKind::Mnist),
            "cifar10" => Some(DatasetKind::Cifar10),
            _ => None,
        }
    }

    /// Per-sample shape `[C, H, W]`.
    pub fn input(self) -> [usize; 3] {
        match self {
            DatasetKind::Mnist => [1, 28, 28],
            DatasetKind::Cifar10 => [3, 32, 32],
        }
    }

    pub fn classes(self) -> usize {
        10
    }

    /// Guesses the kind from the files present in `dir`.
    pub fn detect(dir: &Path) -> Result<Self> {
        if cifar::is_cifar10_dir(dir) {
            Ok(DatasetKind::Cifar10)
        } else if dir.join("t10k-images-idx3-ubyte").is_file() || dir.join("t10k-images.idx3-ubyte").is_file() {
            Ok(DatasetKind::Mnist)
        } else {
            Err(DataError::Mismatch(format!(
                "{} holds neither MNIST IDX files nor CIFAR-10 binary batches",
                dir.display()
            )))
        }
    }
}

/// Loads the training (`train = true`) or test split of `kind` from `dir`.
pub fn load_split(kind: DatasetKind, dir: &Path, train: bool) -> Result<Dataset<f32>> {
    match kind {
        DatasetKind::Mnist => idx::load_mnist(dir, train),
        DatasetKind::Cifar10 => cifar::load_cifar10(dir, train),
    }
}

/// Keeps the first `limit` samples when a limit is set.
pub fn limit(data: Dataset<f32>, limit: Option<usize>) -> Result<Dataset<f32>> {
    match limit {
        Some(n) if n < data.len() => Ok(data.truncated(n)?),
        _ => Ok(data),
    }
}
