use alloc::vec::Vec;

use crate::network::NetworkState;
use crate::numerics::Real;
use crate::{Error, Result};

/// How the exit timestep is read off the per-timestep scale magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitRule {
    /// Run through the last timestep at which any layer's mean `|γ|` is still
    /// at or above the threshold.
    #[default]
    LastAbove,
    /// Stop before the first timestep at which every layer is below the threshold.
    FirstAllBelow,
}

/// Precomputed inference horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyExitPolicy {
    pub tau: f64,
    pub rule: ExitRule,
    /// One-based number of timesteps to run, in `1..=T`.
    pub t_exit: usize,
    pub timesteps: usize,
    /// Mean `|γ|` per `[layer][timestep]` of every per-timestep normalized layer.
    pub layer_means: Vec<Vec<f64>>,
}

/// Mean `|γ_l^t|` over channels for every layer with per-timestep normalization.
pub fn layer_gamma_means<S: Real>(net: &NetworkState<S>) -> Result<Vec<Vec<f64>>> {
    let mut means = Vec::new();
    for layer in &net.layers {
        let Some(bn) = layer.norm.as_ref().filter(|b| !b.is_time_shared()) else {
            continue;
        };
        if !bn.stats_populated() {
            return Err(Error::invalid(
                "exit_time",
                "normalization layers have not been trained",
            ));
        }
        let per_t = (0..bn.timesteps())
            .map(|t| {
                let g = bn.gamma_at(t)?;
                Ok(g.iter().map(|v| v.widen().abs()).sum::<f64>() / g.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        means.push(per_t);
    }
    if means.is_empty() {
        return Err(Error::invalid("exit_time", "network has no per-timestep normalization"));
    }
    Ok(means)
}

/// Applies `rule` to mean `|γ|` values laid out `[layer][timestep]`.
pub fn exit_time_from_means(means: &[Vec<f64>], tau: f64, rule: ExitRule) -> Result<usize> {
    let t_max = means.first().map_or(0, |m| m.len());
    if t_max == 0 || means.iter().any(|m| m.len() != t_max) {
        return Err(Error::invalid(
            "exit_time",
            "need equally long, non-empty per-layer series",
        ));
    }
    if tau.is_nan() {
        return Err(Error::invalid("exit_time", "threshold is NaN"));
    }
    let any_above = |t: usize| means.iter().any(|m| m[t] >= tau);
    Ok(match rule {
        ExitRule::LastAbove => (0..t_max).rev().find(|&t| any_above(t)).map_or(1, |t| t + 1),
        ExitRule::FirstAllBelow => match (0..t_max).find(|&t| !any_above(t)) {
            Some(t) => t.max(1),
            None => t_max,
        },
    })
}

/// Computes the exit timestep from the trained scales alone, without running
/// the network.
pub fn compute_exit_time<S: Real>(net: &NetworkState<S>, tau: f64, rule: ExitRule) -> Result<EarlyExitPolicy> {
    let layer_means = layer_gamma_means(net)?;
    let t_exit = exit_time_from_means(&layer_means, tau, rule)?;
    Ok(EarlyExitPolicy {
        tau,
        rule,
        t_exit,
        timesteps: net.timesteps(),
        layer_means,
    })
}
