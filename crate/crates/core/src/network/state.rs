use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::spec::{NetSpec, Norm, ResolvedLayer};
use crate::bntt::{BnttLayer, DEFAULT_EMA_RHO, DEFAULT_EPSILON};
use crate::numerics::{Real, Rng, Stream, Tensor};
use crate::{Error, Result};

/// How hidden neurons emit their output in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Binary spikes; the backward pass substitutes the surrogate derivative.
    #[default]
    Heaviside,
    /// Emits the smooth antiderivative of the surrogate so that the analytic
    /// gradient is the exact gradient (finite-difference checks). Reset still
    /// uses the binary spike.
    Smooth,
}

/// Neuron and normalization hyperparameters of a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub timesteps: usize,
    /// Firing threshold θ of every hidden layer.
    pub theta: f64,
    /// Membrane leak λ of every hidden layer.
    pub lambda: f64,
    /// Surrogate damping α.
    pub alpha: f64,
    pub epsilon: f64,
    pub ema_rho: f64,
    /// Feed each layer the spikes its predecessor emitted one step earlier.
    pub delayed_layer_input: bool,
    pub spike_mode: SpikeMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            timesteps: 25,
            theta: 1.0,
            lambda: 0.99,
            alpha: 0.3,
            epsilon: DEFAULT_EPSILON,
            ema_rho: DEFAULT_EMA_RHO,
            delayed_layer_input: false,
            spike_mode: SpikeMode::Heaviside,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "model_config";
        if self.timesteps == 0 {
            return Err(Error::invalid(op, "timesteps must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(op, "threshold must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid(op, "leak must lie in (0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(op, "surrogate damping must be positive"));
        }
        if !(self.epsilon >= 0.0) || !(self.ema_rho > 0.0 && self.ema_rho <= 1.0) {
            return Err(Error::invalid(op, "need epsilon >= 0 and ema_rho in (0, 1]"));
        }
        Ok(())
    }
}

/// Parameters and optimizer buffers of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub weight: Option<Tensor<S>>,
    pub norm: Option<BnttLayer<S>>,
    pub weight_velocity: Option<Tensor<S>>,
    pub gamma_velocity: Option<Tensor<S>>,
}

/// Everything that defines a trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<S> {
    pub spec: NetSpec,
    pub model: ModelConfig,
    pub layers: Vec<LayerParams<S>>,
    resolved: Vec<ResolvedLayer>,
}

impl<S: Real> NetworkState<S> {
    /// Weights drawn from `N(0, 2 / fan_in)`; γ = 1; empty momentum buffers.
    pub fn init(spec: &NetSpec, model: ModelConfig, rng: &Rng) -> Result<Self> {
        model.validate()?;
        let resolved = spec.resolve()?;
        let mut layers = Vec::with_capacity(resolved.len());
        for (i, r) in resolved.iter().enumerate() {
            let weight = r.weight_shape.as_ref().map(|shape| {
                let mut stream = rng.stream(Stream::WeightInit, &[i as u64]);
                let std = libm::sqrt(2.0 / r.fan_in() as f64);
                Tensor::from_fn(shape, |_| {
                    let z: f64 = StandardNormal.sample(&mut stream);
                    S::cast(std * z)
                })
            });
            let norm = match r.spec.norm {
                Norm::Bntt => Some(BnttLayer::new(
                    model.timesteps,
                    r.channels,
                    model.epsilon,
                    model.ema_rho,
                )?),
                Norm::SharedBn => Some(BnttLayer::time_shared(
                    model.timesteps,
                    r.channels,
                    model.epsilon,
                    model.ema_rho,
                )?),
                Norm::None => None,
            };
            layers.push(LayerParams {
                weight_velocity: weight.as_ref().map(|w| Tensor::zeros(w.shape())),
                gamma_velocity: norm.as_ref().map(|n| Tensor::zeros(n.gamma.shape())),
                weight,
                norm,
            });
        }
        Ok(NetworkState {
            spec: spec.clone(),
            model,
            layers,
            resolved,
        })
    }

    /// Reassembles a state from stored parts, checking every shape against the spec.
    pub fn from_parts(spec: &NetSpec, model: ModelConfig, layers: Vec<LayerParams<S>>) -> Result<Self> {
        model.validate()?;
        let resolved = spec.resolve()?;
        if layers.len() != resolved.len() {
            return Err(Error::shape("network_state", &[resolved.len()], &[layers.len()]));
        }
        for (r, p) in resolved.iter().zip(&layers) {
            match (&r.weight_shape, &p.weight, &p.weight_velocity) {
                (Some(s), Some(w), Some(v)) if w.shape() == &s[..] && v.shape() == &s[..] => {}
                (None, None, None) => {}
                (s, w, _) => {
                    return Err(Error::shape(
                        "network_state",
                        s.as_deref().unwrap_or(&[]),
                        w.as_ref().map(|w| w.shape()).unwrap_or(&[]),
                    ))
                }
            }
            let slots = match r.spec.norm {
                Norm::Bntt => Some(model.timesteps),
                Norm::SharedBn => Some(1),
                Norm::None => None,
            };
            match (slots, &p.norm, &p.gamma_velocity) {
                (Some(n), Some(b), Some(v))
                    if b.gamma.shape() == [n, r.channels]
                        && v.shape() == [n, r.channels]
                        && b.timesteps() == model.timesteps
                        && b.is_time_shared() == (r.spec.norm == Norm::SharedBn) => {}
                (None, None, None) => {}
                _ => {
                    return Err(Error::invalid(
                        "network_state",
                        "normalization parameters do not match the architecture",
                    ))
                }
            }
        }
        Ok(NetworkState {
            spec: spec.clone(),
            model,
            layers,
            resolved,
        })
    }

    pub fn resolved(&self) -> &[ResolvedLayer] {
        &self.resolved
    }

    pub fn timesteps(&self) -> usize {
        self.model.timesteps
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_ref().map_or(0, |w| w.len()) + l.norm.as_ref().map_or(0, |n| n.gamma.len()))
            .sum()
    }

    /// Converts every tensor to another precision.
    pub fn cast<T: Real>(&self) -> NetworkState<T> {
        let conv = |t: &Option<Tensor<S>>| t.as_ref().map(|t| t.cast::<T>());
        NetworkState {
            spec: self.spec.clone(),
            model: self.model,
            resolved: self.resolved.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: conv(&l.weight),
                    weight_velocity: conv(&l.weight_velocity),
                    gamma_velocity: conv(&l.gamma_velocity),
                    norm: l.norm.as_ref().map(|n| {
                        let mut m = if n.is_time_shared() {
                            BnttLayer::time_shared(n.timesteps(), n.channels(), n.epsilon, n.ema_rho)
                        } else {
                            BnttLayer::new(n.timesteps(), n.channels(), n.epsilon, n.ema_rho)
                        }
                        .expect("dimensions already validated");
                        m.gamma = n.gamma.cast();
                        m.running_mean = n.running_mean.cast();
                        m.running_var = n.running_var.cast();
                        m.mark_populated(n.populated_slots()).expect("same slot count");
                        m
                    }),
                })
                .collect(),
        }
    }
}

/// Gradients for every learnable tensor, laid out like [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub weight: Vec<Option<Tensor<S>>>,
    pub gamma: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    pub fn zeros_like(net: &NetworkState<S>) -> Self {
        Gradients {
            weight: net
                .layers
                .iter()
                .map(|l| l.weight.as_ref().map(|w| Tensor::zeros(w.shape())))
                .collect(),
            gamma: net
                .layers
                .iter()
                .map(|l| l.norm.as_ref().map(|n| Tensor::zeros(n.gamma.shape())))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weight
            .iter()
            .chain(&self.gamma)
            .flatten()
            .map(|t| t.max_abs())
            .fold(0.0, f64::max)
    }
}
