use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::network::{
    backward_bptt, evaluate_with, forward_unrolled, loss_and_output_grad, Dataset, EvalOptions, ForwardOptions, Mode,
    NetworkState, ATTACK_EPISODE,
};
use crate::numerics::{Real, Rng, Stream, Tensor};
use crate::{Error, Result};

/// Accuracy under one perturbation strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint {
    pub strength: f64,
    pub accuracy: f64,
}

fn clamp01<S: Real>(v: S) -> S {
    v.max(S::ZERO).min(S::ONE)
}

/// `x ← clamp(x + σ·z, 0, 1)` with `z ~ N(0, 1)` drawn per pixel from a stream
/// keyed by the sample id, so every σ sees the same noise pattern.
pub fn add_gaussian_noise<S: Real>(images: &mut Tensor<S>, sample_ids: &[u64], sigma: f64, rng: &Rng) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("gaussian_noise", "sigma must be non-negative"));
    }
    if sample_ids.len() != images.batch() {
        return Err(Error::shape("gaussian_noise", &[images.batch()], &[sample_ids.len()]));
    }
    let row = images.row_len();
    for (img, &id) in images.data_mut().chunks_exact_mut(row).zip(sample_ids) {
        let mut stream = rng.stream(Stream::Noise, &[id]);
        for p in img {
            let z: f64 = StandardNormal.sample(&mut stream);
            *p = clamp01(S::cast(p.widen() + sigma * z));
        }
    }
    Ok(())
}

/// Accuracy on `data` with Gaussian noise of each σ added before encoding.
pub fn gaussian_noise_eval<S: Real>(
    net: &NetworkState<S>,
    data: &Dataset<S>,
    sigmas: &[f64],
    opts: &EvalOptions,
    rng: &Rng,
) -> Result<Vec<RobustnessPoint>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let report = evaluate_with(net, data, opts, rng, |x, _, ids| add_gaussian_noise(x, ids, sigma, rng))?;
            Ok(RobustnessPoint {
                strength: sigma,
                accuracy: report.accuracy(),
            })
        })
        .collect()
}

/// Fast gradient sign attack `x_adv = clamp(x + ε·sign(∇ₓL), 0, 1)`.
///
/// The input gradient is taken through the evaluation-mode network, treating
/// the Poisson encoder as the identity (the frame gradients are averaged over
/// timesteps). `sign(0) = 0`.
pub fn fgsm_attack<S: Real>(
    net: &NetworkState<S>,
    images: &Tensor<S>,
    labels: &[usize],
    sample_ids: &[u64],
    eps: f64,
    rng: &Rng,
) -> Result<Tensor<S>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid("fgsm", "epsilon must be non-negative"));
    }
    let opts = ForwardOptions {
        keep_tape: true,
        ..ForwardOptions::eval(ATTACK_EPISODE)
    };
    let out = forward_unrolled(net, images, sample_ids, rng, &opts)?;
    debug_assert_eq!(out.tape.as_ref().map(|t| t.mode()), Some(Mode::Eval));
    let (_, g) = loss_and_output_grad(&out.potentials, labels)?;
    let (_, gx) = backward_bptt(net, out.tape.as_ref().expect("tape requested"), &g, true)?;
    let gx = gx.expect("input gradient requested");
    let step = S::cast(eps);
    let data = images
        .data()
        .iter()
        .zip(gx.data())
        .map(|(&x, &g)| {
            let s = if g > S::ZERO {
                S::ONE
            } else if g < S::ZERO {
                -S::ONE
            } else {
                S::ZERO
            };
            clamp01(x + step * s)
        })
        .collect();
    Tensor::from_vec(images.shape(), data)
}

/// Accuracy on adversarial versions of `data` for each ε.
pub fn fgsm_eval<S: Real>(
    net: &NetworkState<S>,
    data: &Dataset<S>,
    epsilons: &[f64],
    opts: &EvalOptions,
    rng: &Rng,
) -> Result<Vec<RobustnessPoint>> {
    epsilons
        .iter()
        .map(|&eps| {
            let report = evaluate_with(net, data, opts, rng, |x, labels, ids| {
                if eps > 0.0 {
                    *x = fgsm_attack(net, x, labels, ids, eps, rng)?;
                }
                Ok(())
            })?;
            Ok(RobustnessPoint {
                strength: eps,
                accuracy: report.accuracy(),
            })
        })
        .collect()
}
