//! Poisson rate coding of static images.
//!
//! Every pixel fires independently at each timestep with probability equal to
//! its intensity, so the expected firing rate over `T` steps equals the
//! intensity. The uniform draw for pixel `i` at timestep `t` of sample `s` in
//! episode `e` is word `t · n + i` of the [`Stream::Poisson`] stream keyed by
//! `(e, s)`, where `n` is the number of pixels per sample. Frames can therefore
//! be regenerated in any order and any batch composition.

use alloc::vec::Vec;

use rand::RngCore;

use crate::numerics::rng::unit_from_u32;
use crate::numerics::{Real, Rng, Stream, Tensor};
use crate::{Error, Result};

/// Binary spike tensor for one timestep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeFrame {
    shape: Vec<usize>,
    bits: Vec<u8>,
}

impl SpikeFrame {
    pub fn new(shape: &[usize], bits: Vec<u8>) -> Result<Self> {
        if shape.iter().product::<usize>() != bits.len() {
            return Err(Error::shape("spike_frame", &[bits.len()], shape));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("spike_frame", "spike values must be 0 or 1"));
        }
        Ok(SpikeFrame {
            shape: shape.to_vec(),
            bits,
        })
    }

    pub(crate) fn from_tensor<S: Real>(t: &Tensor<S>) -> Self {
        SpikeFrame {
            shape: t.shape().to_vec(),
            bits: t.data().iter().map(|&v| u8::from(v != S::ZERO)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().map(|&b| b as u64).sum()
    }

    pub fn to_tensor<S: Real>(&self) -> Tensor<S> {
        Tensor::from_fn(&self.shape, |i| if self.bits[i] == 1 { S::ONE } else { S::ZERO })
    }
}

/// Identifies which frame of which sample is being drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameKey {
    /// Distinguishes passes over the data (training epoch, evaluation, attack).
    pub episode: u64,
    pub sample: u64,
    /// Zero-based timestep.
    pub timestep: usize,
}

pub(crate) fn check_intensities<S: Real>(pixels: &[S]) -> Result<()> {
    let ok = pixels.iter().all(|&p| p.is_finite() && p >= S::ZERO && p <= S::ONE);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("poisson_encode", "pixel intensities must lie in [0, 1]"))
    }
}

/// Writes the spikes of one sample's frame into `out` as 0/1 values.
pub(crate) fn encode_into<S: Real>(pixels: &[S], rng: &Rng, key: FrameKey, out: &mut [S]) {
    let mut stream = rng.stream(Stream::Poisson, &[key.episode, key.sample]);
    stream.set_word_pos((key.timestep as u128) * pixels.len() as u128);
    for (o, &p) in out.iter_mut().zip(pixels) {
        let u = unit_from_u32(stream.next_u32());
        *o = if u < p.widen() { S::ONE } else { S::ZERO };
    }
}

/// Encodes one image (any shape, intensities in `[0, 1]`) into a spike frame.
pub fn poisson_encode<S: Real>(image: &Tensor<S>, rng: &Rng, key: FrameKey) -> Result<SpikeFrame> {
    check_intensities(image.data())?;
    let mut out = Tensor::<S>::zeros(image.shape());
    encode_into(image.data(), rng, key, out.data_mut());
    Ok(SpikeFrame::from_tensor(&out))
}

/// Encodes a batch `[B, ...]` whose entries carry the given sample ids.
pub fn poisson_encode_batch<S: Real>(
    images: &Tensor<S>,
    sample_ids: &[u64],
    rng: &Rng,
    episode: u64,
    timestep: usize,
) -> Result<Tensor<S>> {
    if sample_ids.len() != images.batch() {
        return Err(Error::shape("poisson_encode", &[images.batch()], &[sample_ids.len()]));
    }
    check_intensities(images.data())?;
    let mut out = Tensor::zeros(images.shape());
    fill_batch(images, sample_ids, rng, episode, timestep, &mut out);
    Ok(out)
}

pub(crate) fn fill_batch<S: Real>(
    images: &Tensor<S>,
    sample_ids: &[u64],
    rng: &Rng,
    episode: u64,
    timestep: usize,
    out: &mut Tensor<S>,
) {
    let row = images.row_len();
    for ((pixels, o), &sample) in images
        .data()
        .chunks_exact(row)
        .zip(out.data_mut().chunks_exact_mut(row))
        .zip(sample_ids)
    {
        encode_into(
            pixels,
            rng,
            FrameKey {
                episode,
                sample,
                timestep,
            },
            o,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn key(t: usize) -> FrameKey {
        FrameKey {
            episode: 0,
            sample: 3,
            timestep: t,
        }
    }

    #[test]
    fn zero_never_fires_one_always_fires() {
        let img = Tensor::<f32>::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
        let rng = Rng::new(1);
        for t in 0..500 {
            let f = poisson_encode(&img, &rng, key(t)).unwrap();
            assert_eq!(f.bits(), &[0, 1]);
        }
    }

    #[test]
    fn half_intensity_rate() {
        // 3-sigma binomial bound for p = 0.5, T = 10000 is 0.015.
        let img = Tensor::<f64>::filled(&[1], 0.5);
        let rng = Rng::new(2);
        let n = 10_000;
        let fired: u64 = (0..n)
            .map(|t| poisson_encode(&img, &rng, key(t)).unwrap().count())
            .sum();
        let rate = fired as f64 / n as f64;
        assert!((rate - 0.5).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn reproducible_and_order_independent() {
        let img = Tensor::<f32>::from_fn(&[2, 1, 4, 4], |i| (i as f32) / 32.0);
        let rng = Rng::new(9);
        let a = poisson_encode_batch(&img, &[10, 11], &rng, 4, 7).unwrap();
        let swapped = img.gather(&[1, 0]).unwrap();
        let b = poisson_encode_batch(&swapped, &[11, 10], &rng, 4, 7).unwrap();
        assert_eq!(a.slice_batch(0, 1).unwrap(), b.slice_batch(1, 1).unwrap());
        assert_eq!(a, poisson_encode_batch(&img, &[10, 11], &rng, 4, 7).unwrap());
    }

    #[test]
    fn rejects_out_of_range_intensity() {
        let rng = Rng::new(0);
        for bad in [-0.1f32, 1.01, f32::NAN] {
            let img = Tensor::<f32>::filled(&[2], bad);
            assert!(poisson_encode(&img, &rng, key(0)).is_err());
        }
    }

    #[test]
    fn spike_frame_validates_bits() {
        assert!(SpikeFrame::new(&[2], vec![0, 2]).is_err());
        assert!(SpikeFrame::new(&[3], vec![0, 1]).is_err());
        assert_eq!(SpikeFrame::new(&[2], vec![1, 1]).unwrap().count(), 2);
    }
}
