#![allow(dead_code)]

use std::path::Path;

use bntt_core::numerics::{Rng, Stream};
use rand::Rng as _;

pub fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend_from_slice(payload);
    b
}

/// Writes a small MNIST-format directory: `train` and `test` samples of
/// 28×28 images whose brightness grows with the label, so the classes are
/// separable. `blank` writes all-zero images instead.
pub fn write_mnist_dir(dir: &Path, train: usize, test: usize, seed: u64, blank: bool) {
    std::fs::create_dir_all(dir).unwrap();
    let rng = Rng::new(seed);
    for (prefix, n) in [("train", train), ("t10k", test)] {
        let mut pixels = Vec::with_capacity(n * 784);
        let mut labels = Vec::with_capacity(n);
        let mut r = rng.stream(Stream::Noise, &[n as u64, prefix.len() as u64]);
        for i in 0..n {
            let y = (i % 10) as u8;
            labels.push(y);
            for p in 0..784 {
                let v = if blank {
                    0
                } else {
                    // a class-dependent stripe plus noise
                    let row = p / 28;
                    let stripe = row / 3 == usize::from(y);
                    let base: u8 = if stripe { 200 } else { 10 };
                    base.saturating_add(r.random_range(0..40))
                };
                pixels.push(v);
            }
        }
        std::fs::write(
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            idx_bytes(0x0803, &[n as u32, 28, 28], &pixels),
        )
        .unwrap();
        std::fs::write(
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
            idx_bytes(0x0801, &[n as u32], &labels),
        )
        .unwrap();
    }
}

/// Configuration of the toy training runs.
pub const TOY_CONFIG: &str = "\
# toy run on a handful of samples
model.arch = mlp
model.hidden = 16
model.threshold = 0.5
train.timesteps = 4
train.batch_size = 5
train.epochs = 3
train.lr = 0.05
train.seed = 7
train.checkpoint_every = 1
";
