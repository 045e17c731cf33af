//! File formats, reports and the command-line driver around [`bntt_core`].
//!
//! - [`dataio`]: MNIST/CIFAR-10 loaders, checkpoints, run configuration
//! - [`parallel`]: evaluation spread over a rayon pool
//! - [`report`]: CSV and text result files
//! - [`manifest`]: the reproducibility record of a run
//! - [`cli`]: the `bntt` command line

pub mod cli;
pub mod dataio;
mod error;
pub mod manifest;
pub mod parallel;
pub mod report;

pub use error::{DataError, Result};
