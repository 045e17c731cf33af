//! Leaky integrate-and-fire dynamics with soft reset, and the triangular
//! surrogate derivative used in place of the spike function's derivative.

use crate::encoding::SpikeFrame;
use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

/// Membrane potentials of one layer together with its leak and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LifLayerState<S> {
    pub u: Tensor<S>,
    pub lambda: S,
    pub theta: S,
}

impl<S: Real> LifLayerState<S> {
    pub fn new(shape: &[usize], lambda: S, theta: S) -> Result<Self> {
        if !(lambda > S::ZERO && lambda <= S::ONE) {
            return Err(Error::invalid("lif", "leak must lie in (0, 1]"));
        }
        if !(theta > S::ZERO) {
            return Err(Error::invalid("lif", "threshold must be positive"));
        }
        Ok(LifLayerState {
            u: Tensor::zeros(shape),
            lambda,
            theta,
        })
    }

    /// Non-spiking integrator (leak 1, infinite threshold) used for the output layer.
    pub fn accumulator(shape: &[usize]) -> Self {
        LifLayerState {
            u: Tensor::zeros(shape),
            lambda: S::ONE,
            theta: S::INFINITY,
        }
    }
}

/// Damping factor of the surrogate derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub alpha: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams { alpha: 0.3 }
    }
}

impl SurrogateParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(SurrogateParams { alpha })
        } else {
            Err(Error::invalid("surrogate", "alpha must be positive"))
        }
    }
}

/// `α · max(0, 1 − |(u − θ) / θ|)`.
#[inline]
pub fn surrogate<S: Real>(u: S, theta: S, alpha: S) -> S {
    let v = S::ONE - ((u - theta) / theta).abs();
    if v > S::ZERO {
        alpha * v
    } else {
        S::ZERO
    }
}

/// Antiderivative of [`surrogate`] with value 0 at `u <= 0` and `α·θ` at `u >= 2θ`.
#[inline]
pub fn smooth<S: Real>(u: S, theta: S, alpha: S) -> S {
    let half = S::cast(0.5);
    let two = S::cast(2.0);
    if u <= S::ZERO {
        S::ZERO
    } else if u <= theta {
        alpha * u * u / (two * theta)
    } else if u < two * theta {
        let d = u - theta;
        alpha * (half * theta + two * d - (u * u - theta * theta) / (two * theta))
    } else {
        alpha * theta
    }
}

/// Elementwise surrogate derivative of the spike function.
pub fn surrogate_grad<S: Real>(u: &Tensor<S>, theta: S, alpha: S) -> Result<Tensor<S>> {
    if !(theta > S::ZERO) {
        return Err(Error::invalid("surrogate_grad", "threshold must be positive"));
    }
    u.check_finite("surrogate_grad")?;
    Ok(u.map(|v| surrogate(v, theta, alpha)))
}

/// Elementwise smooth stand-in for the spike function whose derivative is
/// exactly [`surrogate_grad`]; used for finite-difference checks.
pub fn smooth_spike<S: Real>(u: &Tensor<S>, theta: S, alpha: S) -> Result<Tensor<S>> {
    if !(theta > S::ZERO) {
        return Err(Error::invalid("smooth_spike", "threshold must be positive"));
    }
    u.check_finite("smooth_spike")?;
    Ok(u.map(|v| smooth(v, theta, alpha)))
}

/// One timestep: `u ← λ·u + input`, fire where `u ≥ θ`, subtract `θ` where fired.
pub fn lif_step<S: Real>(
    state: &LifLayerState<S>,
    weighted_input: &Tensor<S>,
) -> Result<(SpikeFrame, LifLayerState<S>)> {
    state.u.check_same_shape("lif_step", weighted_input)?;
    weighted_input.check_finite("lif_step")?;
    let mut next = state.clone();
    let mut spikes = Tensor::zeros(weighted_input.shape());
    integrate_and_fire(
        next.u.data_mut(),
        weighted_input.data(),
        state.lambda,
        state.theta,
        spikes.data_mut(),
    );
    Ok((SpikeFrame::from_tensor(&spikes), next))
}

/// In-place LIF update. Writes 0/1 into `spikes` and returns the spike count.
#[inline]
pub(crate) fn integrate_and_fire<S: Real>(u: &mut [S], input: &[S], lambda: S, theta: S, spikes: &mut [S]) -> u64 {
    let mut count = 0;
    for ((u, &x), o) in u.iter_mut().zip(input).zip(spikes.iter_mut()) {
        let v = lambda * *u + x;
        if v >= theta {
            *u = v - theta;
            *o = S::ONE;
            count += 1;
        } else {
            *u = v;
            *o = S::ZERO;
        }
    }
    count
}
