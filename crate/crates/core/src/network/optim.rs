use super::state::{Gradients, NetworkState};
use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    /// Applied to weights only; the BNTT scales are not decayed.
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

fn update<S: Real>(
    param: &mut Tensor<S>,
    velocity: &mut Tensor<S>,
    grad: &Tensor<S>,
    lr: f64,
    momentum: f64,
    decay: f64,
) -> Result<()> {
    param.check_same_shape("sgd_step", grad)?;
    for ((p, v), g) in param.data_mut().iter_mut().zip(velocity.data_mut()).zip(grad.data()) {
        let nv = momentum * v.widen() + g.widen() + decay * p.widen();
        *v = S::cast(nv);
        *p = S::cast(p.widen() - lr * nv);
    }
    Ok(())
}

/// `v ← μ·v + g + wd·W`, `W ← W − lr·v` for every weight, and the same
/// without decay for every `γ`.
pub fn sgd_step<S: Real>(net: &mut NetworkState<S>, grads: &Gradients<S>, lr: f64, cfg: &SgdConfig) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid("sgd_step", "learning rate must be positive"));
    }
    if grads.weight.len() != net.layers.len() || grads.gamma.len() != net.layers.len() {
        return Err(Error::shape("sgd_step", &[net.layers.len()], &[grads.weight.len()]));
    }
    for (l, layer) in net.layers.iter_mut().enumerate() {
        if let (Some(w), Some(v), Some(g)) = (layer.weight.as_mut(), layer.weight_velocity.as_mut(), &grads.weight[l]) {
            update(w, v, g, lr, cfg.momentum, cfg.weight_decay)?;
        }
        if let (Some(bn), Some(v), Some(g)) = (layer.norm.as_mut(), layer.gamma_velocity.as_mut(), &grads.gamma[l]) {
            update(&mut bn.gamma, v, g, lr, cfg.momentum, 0.0)?;
        }
    }
    Ok(())
}
