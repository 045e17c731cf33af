//! Training and analysis engine for low-latency spiking neural networks
//! normalized with batch normalization through time (BNTT).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and anything touching the operating system live in the `bntt` crate.
//!
//! Layout:
//! - [`numerics`]: dense tensors, keyed random streams, convolution/pooling/matmul kernels
//! - [`encoding`]: Poisson rate coding of static images
//! - [`neuron`]: leaky integrate-and-fire dynamics and the surrogate gradient
//! - [`bntt`]: per-timestep batch normalization with its analytic backward pass
//! - [`network`]: layer graph, unrolled forward pass, BPTT, SGD and the training loop
//! - [`analysis`]: spike statistics, energy models, early exit and robustness probes
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod bntt;
pub mod encoding;
mod error;
pub mod network;
pub mod neuron;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{Real, Rng, Stream, Tensor};
