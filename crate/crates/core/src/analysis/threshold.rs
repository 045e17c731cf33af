use alloc::vec::Vec;

use crate::bntt::BnttLayer;
use crate::neuron::{lif_step, LifLayerState};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Spike trains of a normalized neuron and of a plain neuron with a rescaled threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrainPair {
    pub bntt: Vec<u8>,
    pub plain: Vec<u8>,
}

impl SpikeTrainPair {
    pub fn hamming(&self) -> usize {
        self.bntt.iter().zip(&self.plain).filter(|(a, b)| a != b).count()
    }
}

/// Drives one evaluation-mode BNTT neuron (running mean 0, per-timestep scale
/// ratio `γᵗ/sqrt(σ̄ᵗ² + ε) = ratios[t]`, threshold `θ`) and one plain LIF
/// neuron with threshold `θ / c̄` (`c̄` the mean ratio) with the same inputs.
///
/// `variances[t]` sets `σ̄ᵗ²`; `γᵗ` is derived from it so that the ratio holds.
/// With a constant power-of-two ratio every operation of the normalized neuron
/// is an exact rescaling of the plain one, so the trains agree bit for bit.
pub fn threshold_equivalence_check(
    inputs: &[f64],
    ratios: &[f64],
    variances: &[f64],
    lambda: f64,
    theta: f64,
) -> Result<SpikeTrainPair> {
    let op = "threshold_equivalence";
    let t = inputs.len();
    if t == 0 || ratios.len() != t || variances.len() != t {
        return Err(Error::shape(
            op,
            &[t, t, t],
            &[inputs.len(), ratios.len(), variances.len()],
        ));
    }
    if ratios.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::invalid(op, "scale ratio must be positive"));
    }
    let mut bn = BnttLayer::<f64>::new(t, 1, crate::bntt::DEFAULT_EPSILON, crate::bntt::DEFAULT_EMA_RHO)?;
    for (step, (&c, &v)) in ratios.iter().zip(variances).enumerate() {
        bn.set_running_stats(step, &[0.0], &[v])?;
        bn.gamma.data_mut()[step] = c * libm::sqrt(v + bn.epsilon);
    }
    let c_bar = ratios.iter().sum::<f64>() / t as f64;

    let mut a = LifLayerState::new(&[1, 1], lambda, theta)?;
    let mut b = LifLayerState::new(&[1, 1], lambda, theta / c_bar)?;
    let mut pair = SpikeTrainPair {
        bntt: Vec::with_capacity(t),
        plain: Vec::with_capacity(t),
    };
    for (step, &x) in inputs.iter().enumerate() {
        let x = Tensor::filled(&[1, 1], x);
        let y = bn.forward_eval(&x, step)?;
        let (oa, na) = lif_step(&a, &y)?;
        let (ob, nb) = lif_step(&b, &x)?;
        pair.bntt.push(oa.bits()[0]);
        pair.plain.push(ob.bits()[0]);
        a = na;
        b = nb;
    }
    Ok(pair)
}
