use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{acc_ab, widen, widen_transposed};
use super::{Real, Tensor};
use crate::{Error, Result};

/// Output extent of a convolution along one axis.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if kernel % 2 == 0 {
        return Err(Error::invalid("conv2d", "kernel size must be odd"));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d", "stride must be positive"));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::invalid("conv2d", "kernel larger than padded input"));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Resolved shapes of one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new<S: Real>(input: &Tensor<S>, kernel: &Tensor<S>, stride: usize, pad: usize) -> Result<Self> {
        let [b, cin, h, w] = input.dims4("conv2d")?;
        let [cout, kcin, kh, kw] = kernel.dims4("conv2d")?;
        if kcin != cin || kh != kw {
            return Err(Error::shape("conv2d", &[cout, cin, kh, kh], kernel.shape()));
        }
        Ok(ConvGeometry {
            batch: b,
            in_channels: cin,
            height: h,
            width: w,
            out_channels: cout,
            kernel: kh,
            stride,
            pad,
            out_height: conv_output_extent(h, kh, stride, pad)?,
            out_width: conv_output_extent(w, kw, stride, pad)?,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_height, self.out_width]
    }

    /// Visits `(position, patch index, input offset)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (k, s, pad) = (self.kernel as isize, self.stride as isize, self.pad as isize);
        let (h, w) = (self.height as isize, self.width as isize);
        let kk = self.kernel * self.kernel;
        for oy in 0..self.out_height {
            for ox in 0..self.out_width {
                let p = oy * self.out_width + ox;
                for c in 0..self.in_channels {
                    for ky in 0..k {
                        let iy = oy as isize * s - pad + ky;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = ox as isize * s - pad + kx;
                            if ix < 0 || ix >= w {
                                continue;
                            }
                            let col = c * kk + (ky * k + kx) as usize;
                            let off = (c * self.height + iy as usize) * self.width + ix as usize;
                            f(p, col, off);
                        }
                    }
                }
            }
        }
    }

    /// Taps grouped by the input element they read.
    fn taps(&self) -> Taps {
        let in_len = self.in_channels * self.height * self.width;
        let mut start = vec![0u32; in_len + 1];
        self.for_each_tap(|_, _, off| start[off + 1] += 1);
        for i in 0..in_len {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut entries = vec![(0u32, 0u32); start[in_len] as usize];
        self.for_each_tap(|p, col, off| {
            entries[fill[off] as usize] = (p as u32, col as u32);
            fill[off] += 1;
        });
        Taps { start, entries }
    }
}

/// For each input element, the `(output position, patch index)` pairs it feeds.
struct Taps {
    start: Vec<u32>,
    entries: Vec<(u32, u32)>,
}

impl Taps {
    #[inline]
    fn of(&self, off: usize) -> &[(u32, u32)] {
        &self.entries[self.start[off] as usize..self.start[off + 1] as usize]
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// 2-D cross-correlation (no kernel flip) of `input[B,Cin,H,W]` with
/// `kernel[Cout,Cin,k,k]`.
///
/// Work is driven by the non-zero input elements, each scattering its
/// contribution to the outputs it reaches, so binary spike maps cost in
/// proportion to their spike count.
pub fn conv2d<S: Real>(input: &Tensor<S>, kernel: &Tensor<S>, stride: usize, pad: usize) -> Result<Tensor<S>> {
    let g = ConvGeometry::new(input, kernel, stride, pad)?;
    let (plen, npos, cout) = (g.patch_len(), g.positions(), g.out_channels);
    let wt = widen_transposed(kernel.data(), cout, plen);
    let taps = g.taps();
    let in_len = g.in_channels * g.height * g.width;
    let mut acc = vec![0.0; npos * cout];
    let mut out = Vec::with_capacity(g.batch * cout * npos);
    for sample in input.data().chunks_exact(in_len) {
        acc.fill(0.0);
        for (off, &v) in sample.iter().enumerate() {
            if v == S::ZERO {
                continue;
            }
            let v = v.widen();
            for &(p, col) in taps.of(off) {
                let (p, col) = (p as usize, col as usize);
                axpy(&mut acc[p * cout..(p + 1) * cout], v, &wt[col * cout..(col + 1) * cout]);
            }
        }
        for co in 0..cout {
            out.extend((0..npos).map(|p| S::cast(acc[p * cout + co])));
        }
    }
    Tensor::from_vec(&g.output_shape(), out)
}

/// Adjoints of [`conv2d`]: `(grad_input, grad_kernel)`.
pub fn conv2d_backward<S: Real>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (gi, gk) = conv2d_backward_parts(grad_out, input, kernel, stride, pad, true)?;
    Ok((gi.expect("input gradient requested"), gk))
}

/// Same as [`conv2d_backward`] but the input gradient is only formed when
/// `want_input` is set (the first layer of a network never needs it).
pub(crate) fn conv2d_backward_parts<S: Real>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    pad: usize,
    want_input: bool,
) -> Result<(Option<Tensor<S>>, Tensor<S>)> {
    let g = ConvGeometry::new(input, kernel, stride, pad)?;
    if grad_out.shape() != g.output_shape() {
        return Err(Error::shape("conv2d_backward", &g.output_shape(), grad_out.shape()));
    }
    let (plen, npos, cout) = (g.patch_len(), g.positions(), g.out_channels);
    let in_len = g.in_channels * g.height * g.width;
    let out_len = cout * npos;
    let w_wide = widen(kernel.data());
    let taps = g.taps();

    let mut dcols = vec![0.0; if want_input { npos * plen } else { 0 }];
    let mut g_t = vec![0.0; npos * cout];
    let mut gk_t = vec![0.0; plen * cout];
    let mut gi = Vec::with_capacity(if want_input { input.len() } else { 0 });

    for (sample, go) in input
        .data()
        .chunks_exact(in_len)
        .zip(grad_out.data().chunks_exact(out_len))
    {
        for co in 0..cout {
            for p in 0..npos {
                g_t[p * cout + co] = go[co * npos + p].widen();
            }
        }
        for (off, &v) in sample.iter().enumerate() {
            if v != S::ZERO {
                let v = v.widen();
                for &(p, col) in taps.of(off) {
                    let (p, col) = (p as usize, col as usize);
                    axpy(
                        &mut gk_t[col * cout..(col + 1) * cout],
                        v,
                        &g_t[p * cout..(p + 1) * cout],
                    );
                }
            }
        }
        if want_input {
            dcols.fill(0.0);
            acc_ab(&g_t, npos, cout, &w_wide, &mut dcols);
            gi.extend((0..in_len).map(|off| {
                let s: f64 = taps
                    .of(off)
                    .iter()
                    .map(|&(p, col)| dcols[p as usize * plen + col as usize])
                    .sum();
                S::cast(s)
            }));
        }
    }

    let mut gk = vec![S::ZERO; cout * plen];
    for c in 0..plen {
        for co in 0..cout {
            gk[co * plen + c] = S::cast(gk_t[c * cout + co]);
        }
    }
    let gi = if want_input {
        Some(Tensor::from_vec(input.shape(), gi)?)
    } else {
        None
    };
    Ok((gi, Tensor::from_vec(kernel.shape(), gk)?))
}
