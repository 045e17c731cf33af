use alloc::vec;
use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::{Error, Result};

/// `out[r, :] += Σ_k a[r, k] · b[k, :]`, skipping zero entries of `a`.
///
/// `a` is `rows × inner`, `b` is `inner × cols`, `out` is `rows × cols`.
/// Zero skipping is what makes binary spike inputs cheap.
pub(crate) fn acc_ab<S: Real>(a: &[S], rows: usize, inner: usize, b: &[f64], out: &mut [f64]) {
    let cols = out.len() / rows.max(1);
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    for (a_row, out_row) in a.chunks_exact(inner).zip(out.chunks_exact_mut(cols)) {
        for (k, &av) in a_row.iter().enumerate() {
            if av == S::ZERO {
                continue;
            }
            let av = av.widen();
            let b_row = &b[k * cols..(k + 1) * cols];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k, :] += Σ_r a[r, k] · b[r, :]`, skipping zero entries of `a`.
///
/// `a` is `rows × inner`, `b` is `rows × cols`, `out` is `inner × cols`.
pub(crate) fn acc_atb<S: Real>(a: &[S], rows: usize, inner: usize, b: &[f64], out: &mut [f64]) {
    let cols = b.len() / rows.max(1);
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(out.len(), inner * cols);
    for (a_row, b_row) in a.chunks_exact(inner).zip(b.chunks_exact(cols)) {
        for (k, &av) in a_row.iter().enumerate() {
            if av == S::ZERO {
                continue;
            }
            let av = av.widen();
            let out_row = &mut out[k * cols..(k + 1) * cols];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

pub(crate) fn widen<S: Real>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

/// Transposes a `rows × cols` matrix into a widened `cols × rows` buffer.
pub(crate) fn widen_transposed<S: Real>(v: &[S], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = v[r * cols + c].widen();
        }
    }
    t
}

pub(crate) fn round_into<S: Real>(acc: &[f64]) -> Vec<S> {
    acc.iter().map(|&v| S::cast(v)).collect()
}

fn dims2<S: Real>(t: &Tensor<S>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::Invalid {
            op,
            reason: alloc::format!("expected a matrix, got shape {s:?}"),
        }),
    }
}

/// Matrix product `a[M,K] · b[K,N]`.
pub fn matmul<S: Real>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, k) = dims2(a, "matmul")?;
    let (k2, n) = dims2(b, "matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", &[k, n], b.shape()));
    }
    let mut acc = vec![0.0; m * n];
    acc_ab(a.data(), m, k, &widen(b.data()), &mut acc);
    Tensor::from_vec(&[m, n], round_into(&acc))
}

/// Adjoints of [`matmul`]: returns `(g · bᵀ, aᵀ · g)`.
pub fn matmul_backward<S: Real>(grad_out: &Tensor<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    let (m, k) = dims2(a, "matmul_backward")?;
    let (_, n) = dims2(b, "matmul_backward")?;
    if grad_out.shape() != [m, n] {
        return Err(Error::shape("matmul_backward", &[m, n], grad_out.shape()));
    }
    let mut ga = vec![0.0; m * k];
    acc_ab(grad_out.data(), m, n, &widen_transposed(b.data(), k, n), &mut ga);
    let mut gb = vec![0.0; k * n];
    acc_atb(a.data(), m, k, &widen(grad_out.data()), &mut gb);
    Ok((
        Tensor::from_vec(&[m, k], round_into(&ga))?,
        Tensor::from_vec(&[k, n], round_into(&gb))?,
    ))
}

/// Fully connected map `y[b, :] = W · x[b, :]` with `W` stored `[out, in]`.
/// Trailing axes of `x` are flattened.
pub fn linear<S: Real>(x: &Tensor<S>, weight: &Tensor<S>) -> Result<Tensor<S>> {
    let (out_f, in_f) = dims2(weight, "linear")?;
    let b = x.batch();
    if x.row_len() != in_f {
        return Err(Error::shape("linear", &[b, in_f], x.shape()));
    }
    let mut acc = vec![0.0; b * out_f];
    acc_ab(
        x.data(),
        b,
        in_f,
        &widen_transposed(weight.data(), out_f, in_f),
        &mut acc,
    );
    Tensor::from_vec(&[b, out_f], round_into(&acc))
}

/// Adjoints of [`linear`]: `(grad_x, grad_weight)`, `grad_x` shaped like `x`.
pub fn linear_backward<S: Real>(
    grad_out: &Tensor<S>,
    x: &Tensor<S>,
    weight: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (gx, gw) = linear_backward_parts(grad_out, x, weight, true)?;
    Ok((gx.expect("input gradient requested"), gw))
}

/// [`linear_backward`] with the input gradient formed only when `want_input` is set.
pub(crate) fn linear_backward_parts<S: Real>(
    grad_out: &Tensor<S>,
    x: &Tensor<S>,
    weight: &Tensor<S>,
    want_input: bool,
) -> Result<(Option<Tensor<S>>, Tensor<S>)> {
    let (out_f, in_f) = dims2(weight, "linear_backward")?;
    let b = x.batch();
    if grad_out.shape() != [b, out_f] || x.row_len() != in_f {
        return Err(Error::shape("linear_backward", &[b, out_f], grad_out.shape()));
    }
    let gx = if want_input {
        let mut gx = vec![0.0; b * in_f];
        acc_ab(grad_out.data(), b, out_f, &widen(weight.data()), &mut gx);
        Some(Tensor::from_vec(x.shape(), round_into(&gx))?)
    } else {
        None
    };
    // grad_weightᵀ = xᵀ · g, skipping zero (non-spiking) inputs
    let mut gwt = vec![0.0; in_f * out_f];
    acc_atb(x.data(), b, in_f, &widen(grad_out.data()), &mut gwt);
    let mut gw = vec![S::ZERO; out_f * in_f];
    for i in 0..in_f {
        for o in 0..out_f {
            gw[o * in_f + i] = S::cast(gwt[i * out_f + o]);
        }
    }
    Ok((gx, Tensor::from_vec(&[out_f, in_f], gw)?))
}
