//! Dense tensors, seeded random streams and the linear-algebra kernels.
//!
//! All tensors are row-major. Image-like tensors use `[batch, channel, height, width]`.
//! Every reduction accumulates in `f64` and rounds once at the end, so `f32` and
//! `f64` runs differ only by the final rounding of each output element.

mod conv;
mod gemm;
mod pool;
mod real;
pub(crate) mod rng;
mod tensor;

pub use conv::{conv2d, conv2d_backward, conv_output_extent, ConvGeometry};
pub use gemm::{linear, linear_backward, matmul, matmul_backward};
pub use pool::{avgpool2, avgpool2_backward};
pub use real::Real;
pub use rng::{Rng, Stream, StreamRng};
pub use tensor::Tensor;

pub(crate) use conv::conv2d_backward_parts;
pub(crate) use gemm::linear_backward_parts;
