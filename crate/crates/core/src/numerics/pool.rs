use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::{Error, Result};

fn pooled_dims<S: Real>(input: &Tensor<S>, op: &'static str) -> Result<[usize; 4]> {
    let [b, c, h, w] = input.dims4(op)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(op, "spatial extents must be even"));
    }
    Ok([b, c, h, w])
}

/// 2×2 average pooling with stride 2.
pub fn avgpool2<S: Real>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let [b, c, h, w] = pooled_dims(input, "avgpool2")?;
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in x.chunks_exact(h * w) {
        for oy in 0..oh {
            let r0 = &plane[2 * oy * w..(2 * oy + 1) * w];
            let r1 = &plane[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..ow {
                let s = r0[2 * ox].widen() + r0[2 * ox + 1].widen() + r1[2 * ox].widen() + r1[2 * ox + 1].widen();
                out.push(S::cast(0.25 * s));
            }
        }
    }
    Tensor::from_vec(&[b, c, oh, ow], out)
}

/// Adjoint of [`avgpool2`]: each input cell receives a quarter of its window's gradient.
pub fn avgpool2_backward<S: Real>(grad_out: &Tensor<S>, input_shape: &[usize]) -> Result<Tensor<S>> {
    let [b, c, h, w] = match *input_shape {
        [b, c, h, w] if h % 2 == 0 && w % 2 == 0 => [b, c, h, w],
        _ => {
            return Err(Error::invalid(
                "avgpool2_backward",
                "input must be 4-d with even extents",
            ))
        }
    };
    let (oh, ow) = (h / 2, w / 2);
    if grad_out.shape() != [b, c, oh, ow] {
        return Err(Error::shape("avgpool2_backward", &[b, c, oh, ow], grad_out.shape()));
    }
    let quarter = S::cast(0.25);
    let mut out = Tensor::zeros(input_shape);
    for (plane, g) in out
        .data_mut()
        .chunks_exact_mut(h * w)
        .zip(grad_out.data().chunks_exact(oh * ow))
    {
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = g[(y / 2) * ow + x / 2] * quarter;
            }
        }
    }
    Ok(out)
}
