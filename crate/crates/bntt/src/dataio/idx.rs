//! Big-endian IDX files as distributed for MNIST.

use std::path::Path;

use bntt_core::network::Dataset;
use bntt_core::Tensor;

use crate::error::{DataError, Result};

/// Magic number of an unsigned-byte rank-3 (image) file.
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number of an unsigned-byte rank-1 (label) file.
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Header and payload of an unsigned-byte IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::format(what, format!("truncated header: {} bytes", bytes.len())))
}

/// Parses an IDX file whose magic must equal `expected`.
///
/// The payload must hold exactly the product of the dimensions; short files
/// and trailing bytes are both rejected.
pub fn parse_idx(bytes: &[u8], expected: u32, what: &str) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(DataError::format(
            what,
            format!("bad magic {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * i, what)? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| DataError::format(what, format!("dimensions {dims:?} overflow")))?;
    let payload = &bytes[4 + 4 * rank..];
    if payload.len() < count {
        return Err(DataError::format(
            what,
            format!("truncated payload: {} of {count} bytes", payload.len()),
        ));
    }
    if payload.len() > count {
        return Err(DataError::format(
            what,
            format!("{} trailing bytes after {count}-byte payload", payload.len() - count),
        ));
    }
    Ok(IdxArray {
        magic,
        dims,
        data: payload.to_vec(),
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

/// Reads an image file into `[N, 1, H, W]` with pixels scaled by 1/255.
pub fn load_idx_images(path: &Path) -> Result<Tensor<f32>> {
    let arr = parse_idx(&read(path)?, IMAGE_MAGIC, &path.display().to_string())?;
    let [n, h, w] = [arr.dims[0], arr.dims[1], arr.dims[2]];
    let data = arr.data.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(Tensor::from_vec(&[n, 1, h, w], data)?)
}

/// Reads a label file; every label must be below `classes`.
pub fn load_idx_labels(path: &Path, classes: usize) -> Result<Vec<usize>> {
    let what = path.display().to_string();
    let arr = parse_idx(&read(path)?, LABEL_MAGIC, &what)?;
    arr.data
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let y = usize::from(b);
            if y < classes {
                Ok(y)
            } else {
                Err(DataError::format(
                    &what,
                    format!("label {y} of record {i} is not below {classes}"),
                ))
            }
        })
        .collect()
}

/// MNIST split: `train` or `t10k` file pairs inside `dir`.
pub fn load_mnist(dir: &Path, train: bool) -> Result<Dataset<f32>> {
    let prefix = if train { "train" } else { "t10k" };
    let find = |kind: &str, rank: u8| {
        [
            format!("{prefix}-{kind}-idx{rank}-ubyte"),
            format!("{prefix}-{kind}.idx{rank}-ubyte"),
        ]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            DataError::io(
                dir.join(format!("{prefix}-{kind}-idx{rank}-ubyte")),
                std::io::Error::from(std::io::ErrorKind::NotFound),
            )
        })
    };
    let images = load_idx_images(&find("images", 3)?)?;
    let labels = load_idx_labels(&find("labels", 1)?, 10)?;
    if labels.len() != images.batch() {
        return Err(DataError::Mismatch(format!(
            "{} images but {} labels in {}",
            images.batch(),
            labels.len(),
            dir.display()
        )));
    }
    Ok(Dataset::new(images, labels, 10)?)
}
