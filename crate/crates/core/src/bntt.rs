//! Batch normalization through time.
//!
//! Each timestep owns its own scale `γᵗ` and running statistics `(μ̄ᵗ, σ̄ᵗ²)`,
//! one entry per channel. Training normalizes with the statistics of the
//! current minibatch at that timestep; evaluation uses the running averages.
//! There is no shift term.
//!
//! Timesteps are zero-based here: `step` ranges over `0..T`.
//!
//! For activations shaped `[m, C, H, W]` statistics are reduced over the batch
//! and both spatial axes, so the "batch size" in the backward formula is
//! `m·H·W`. For `[m, C]` it is `m`.

use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_EMA_RHO: f64 = 0.1;

/// Learnable per-timestep scales and running statistics of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnttLayer<S> {
    timesteps: usize,
    channels: usize,
    shared: bool,
    /// `[slots, C]`; `slots` is `T`, or 1 for the time-shared ablation.
    pub gamma: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub epsilon: f64,
    /// Weight of the newest batch in the moving average.
    pub ema_rho: f64,
    populated: Vec<bool>,
}

/// Values saved by a forward call for its backward.
#[derive(Debug, Clone, PartialEq)]
pub struct BnttBatchCache<S> {
    pub step: usize,
    /// Normalized input `x̂`, shaped like the input.
    pub xhat: Tensor<S>,
    /// `∂x̂/∂x` scale per channel: `1/sqrt(σ² + ε)` for batch statistics,
    /// `1/sqrt(σ̄² + ε)` for running statistics.
    pub inv_std: Vec<f64>,
    /// `γᵗ` at the time of the forward call.
    pub gamma: Vec<f64>,
    /// Elements reduced per channel (`m·H·W`).
    pub count: usize,
    /// Whether the forward used batch statistics (training) or running ones.
    pub batch_stats: bool,
}

/// Channel count and spatial size per channel of an activation tensor.
fn layout<S: Real>(x: &Tensor<S>, channels: usize, op: &'static str) -> Result<(usize, usize)> {
    let shape = x.shape();
    if shape.len() < 2 || shape[1] != channels {
        let mut want = shape.to_vec();
        if want.len() >= 2 {
            want[1] = channels;
        }
        return Err(Error::shape(op, &want, shape));
    }
    Ok((shape[0], shape[2..].iter().product()))
}

/// Calls `f(channel, plane)` for every `[batch, channel]` plane.
#[inline]
fn planes<S>(data: &[S], channels: usize, spatial: usize, mut f: impl FnMut(usize, &[S])) {
    for (i, plane) in data.chunks_exact(spatial).enumerate() {
        f(i % channels, plane);
    }
}

impl<S: Real> BnttLayer<S> {
    /// `γ = 1`, running mean 0, running variance 1.
    pub fn new(timesteps: usize, channels: usize, epsilon: f64, ema_rho: f64) -> Result<Self> {
        Self::build(timesteps, channels, epsilon, ema_rho, false)
    }

    /// Conventional batch normalization sharing one set of parameters across
    /// all timesteps (ablation).
    pub fn time_shared(timesteps: usize, channels: usize, epsilon: f64, ema_rho: f64) -> Result<Self> {
        Self::build(timesteps, channels, epsilon, ema_rho, true)
    }

    fn build(timesteps: usize, channels: usize, epsilon: f64, ema_rho: f64, shared: bool) -> Result<Self> {
        if timesteps == 0 || channels == 0 {
            return Err(Error::invalid("bntt", "timesteps and channels must be positive"));
        }
        if !(epsilon >= 0.0) || !(ema_rho > 0.0 && ema_rho <= 1.0) {
            return Err(Error::invalid("bntt", "need epsilon >= 0 and ema_rho in (0, 1]"));
        }
        let slots = if shared { 1 } else { timesteps };
        Ok(BnttLayer {
            timesteps,
            channels,
            shared,
            gamma: Tensor::filled(&[slots, channels], S::ONE),
            running_mean: Tensor::zeros(&[slots, channels]),
            running_var: Tensor::filled(&[slots, channels], S::ONE),
            epsilon,
            ema_rho,
            populated: vec![false; slots],
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_time_shared(&self) -> bool {
        self.shared
    }

    /// Parameter row used at `step`.
    pub fn slot(&self, step: usize) -> Result<usize> {
        if step >= self.timesteps {
            return Err(Error::Timestep {
                op: "bntt",
                t: step + 1,
                max: self.timesteps,
            });
        }
        Ok(if self.shared { 0 } else { step })
    }

    pub fn slots(&self) -> usize {
        self.gamma.batch()
    }

    fn row(t: &Tensor<S>, slot: usize, c: usize) -> &[S] {
        &t.data()[slot * c..(slot + 1) * c]
    }

    pub fn gamma_at(&self, step: usize) -> Result<&[S]> {
        Ok(Self::row(&self.gamma, self.slot(step)?, self.channels))
    }

    /// Whether the running statistics of every slot have been set.
    pub fn stats_populated(&self) -> bool {
        self.populated.iter().all(|&p| p)
    }

    pub fn populated_slots(&self) -> &[bool] {
        &self.populated
    }

    /// Marks the running statistics as usable (restoring from storage).
    pub fn mark_populated(&mut self, flags: &[bool]) -> Result<()> {
        if flags.len() != self.populated.len() {
            return Err(Error::shape("bntt", &[self.populated.len()], &[flags.len()]));
        }
        self.populated.copy_from_slice(flags);
        Ok(())
    }

    /// Overwrites the running statistics of one timestep.
    pub fn set_running_stats(&mut self, step: usize, mean: &[S], var: &[S]) -> Result<()> {
        let slot = self.slot(step)?;
        let c = self.channels;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("bntt", &[c], &[mean.len()]));
        }
        if var.iter().any(|&v| !(v >= S::ZERO)) {
            return Err(Error::invalid("bntt", "running variance must be non-negative"));
        }
        self.running_mean.data_mut()[slot * c..(slot + 1) * c].copy_from_slice(mean);
        self.running_var.data_mut()[slot * c..(slot + 1) * c].copy_from_slice(var);
        self.populated[slot] = true;
        Ok(())
    }

    /// Normalizes with batch statistics without touching the running averages.
    /// Returns `(y, cache, batch mean, batch variance)`.
    pub fn normalize_batch(
        &self,
        x: &Tensor<S>,
        step: usize,
    ) -> Result<(Tensor<S>, BnttBatchCache<S>, Vec<f64>, Vec<f64>)> {
        let slot = self.slot(step)?;
        let c = self.channels;
        let (m, spatial) = layout(x, c, "bntt_forward_train")?;
        if m < 2 {
            return Err(Error::invalid("bntt_forward_train", "batch size must be at least 2"));
        }
        let count = m * spatial;
        let mut mean = vec![0.0; c];
        planes(x.data(), c, spatial, |ch, p| {
            mean[ch] += p.iter().map(|v| v.widen()).sum::<f64>();
        });
        for v in &mut mean {
            *v /= count as f64;
        }
        let mut var = vec![0.0; c];
        planes(x.data(), c, spatial, |ch, p| {
            let mu = mean[ch];
            var[ch] += p.iter().map(|v| (v.widen() - mu) * (v.widen() - mu)).sum::<f64>();
        });
        for v in &mut var {
            *v /= count as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.epsilon)).collect();
        let gamma: Vec<f64> = Self::row(&self.gamma, slot, c).iter().map(|g| g.widen()).collect();

        let mut xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        planes(x.data(), c, spatial, |ch, p| {
            for v in p {
                let h = (v.widen() - mean[ch]) * inv_std[ch];
                xhat.push(S::cast(h));
                y.push(S::cast(gamma[ch] * h));
            }
        });
        let cache = BnttBatchCache {
            step,
            xhat: Tensor::from_vec(x.shape(), xhat)?,
            inv_std,
            gamma,
            count,
            batch_stats: true,
        };
        Ok((Tensor::from_vec(x.shape(), y)?, cache, mean, var))
    }

    /// Training-mode forward at `step`: normalize with batch statistics, scale
    /// by `γᵗ`, then fold the batch statistics into the running averages.
    pub fn forward_train(&mut self, x: &Tensor<S>, step: usize) -> Result<(Tensor<S>, BnttBatchCache<S>)> {
        let (y, cache, mean, var) = self.normalize_batch(x, step)?;
        self.update_running_stats(step, &mean, &var)?;
        Ok((y, cache))
    }

    /// Folds one batch's statistics into the running averages at `step`:
    /// `μ̄ ← (1 − ρ)·μ̄ + ρ·μ`, and likewise for the variance.
    pub fn update_running_stats(&mut self, step: usize, mean: &[f64], var: &[f64]) -> Result<()> {
        let slot = self.slot(step)?;
        let c = self.channels;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("bntt", &[c], &[mean.len()]));
        }
        let rho = self.ema_rho;
        let rm = &mut self.running_mean.data_mut()[slot * c..(slot + 1) * c];
        for (r, &m) in rm.iter_mut().zip(mean) {
            *r = S::cast((1.0 - rho) * r.widen() + rho * m);
        }
        let rv = &mut self.running_var.data_mut()[slot * c..(slot + 1) * c];
        for (r, &v) in rv.iter_mut().zip(var) {
            *r = S::cast((1.0 - rho) * r.widen() + rho * v);
        }
        self.populated[slot] = true;
        Ok(())
    }

    /// Per-channel factor `γᵗ / sqrt(σ̄ᵗ² + ε)` applied at evaluation.
    pub fn eval_scale(&self, step: usize) -> Result<Vec<f64>> {
        let slot = self.slot(step)?;
        let c = self.channels;
        let g = Self::row(&self.gamma, slot, c);
        let v = Self::row(&self.running_var, slot, c);
        Ok(g.iter()
            .zip(v)
            .map(|(g, v)| g.widen() / libm::sqrt(v.widen() + self.epsilon))
            .collect())
    }

    /// Evaluation-mode forward with the running statistics. Each sample is
    /// normalized independently of the rest of the batch.
    pub fn forward_eval(&self, x: &Tensor<S>, step: usize) -> Result<Tensor<S>> {
        Ok(self.eval_with_cache(x, step, false)?.0)
    }

    pub(crate) fn eval_with_cache(
        &self,
        x: &Tensor<S>,
        step: usize,
        want_cache: bool,
    ) -> Result<(Tensor<S>, Option<BnttBatchCache<S>>)> {
        let slot = self.slot(step)?;
        if !self.populated[slot] {
            return Err(Error::invalid(
                "bntt_forward_eval",
                "running statistics were never populated",
            ));
        }
        let c = self.channels;
        let (m, spatial) = layout(x, c, "bntt_forward_eval")?;
        let mean: Vec<f64> = Self::row(&self.running_mean, slot, c)
            .iter()
            .map(|v| v.widen())
            .collect();
        let scale = self.eval_scale(step)?;
        let mut y = Vec::with_capacity(x.len());
        planes(x.data(), c, spatial, |ch, p| {
            y.extend(p.iter().map(|v| S::cast(scale[ch] * (v.widen() - mean[ch]))));
        });
        let y = Tensor::from_vec(x.shape(), y)?;
        if !want_cache {
            return Ok((y, None));
        }
        let inv_std: Vec<f64> = Self::row(&self.running_var, slot, c)
            .iter()
            .map(|v| 1.0 / libm::sqrt(v.widen() + self.epsilon))
            .collect();
        let mut xhat = Vec::with_capacity(x.len());
        planes(x.data(), c, spatial, |ch, p| {
            xhat.extend(p.iter().map(|v| S::cast((v.widen() - mean[ch]) * inv_std[ch])));
        });
        let cache = BnttBatchCache {
            step,
            xhat: Tensor::from_vec(x.shape(), xhat)?,
            inv_std,
            gamma: Self::row(&self.gamma, slot, c).iter().map(|g| g.widen()).collect(),
            count: m * spatial,
            batch_stats: false,
        };
        Ok((y, Some(cache)))
    }
}

/// Backward pass of a BNTT forward call: `(∂L/∂x, ∂L/∂γᵗ)`.
///
/// With `g = γᵗ ⊙ ∂L/∂y` (the gradient w.r.t. `x̂`) and `m` elements per channel,
/// `∂L/∂x_b = (m·g_b − Σ_k g_k − x̂_b · Σ_k g_k x̂_k) / (m·sqrt(σ² + ε))`
/// and `∂L/∂γᵗ = Σ_k ∂L/∂y_k · x̂_k`. When the forward used running statistics
/// the normalization is a fixed affine map and `∂L/∂x = g / sqrt(σ̄² + ε)`.
pub fn bntt_backward<S: Real>(cache: &BnttBatchCache<S>, grad_y: &Tensor<S>) -> Result<(Tensor<S>, Vec<f64>)> {
    cache.xhat.check_same_shape("bntt_backward", grad_y)?;
    let c = cache.gamma.len();
    let (_, spatial) = layout(grad_y, c, "bntt_backward")?;
    let xhat = cache.xhat.data();
    let gy = grad_y.data();

    let mut grad_gamma = vec![0.0; c];
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for (i, (gp, hp)) in gy.chunks_exact(spatial).zip(xhat.chunks_exact(spatial)).enumerate() {
        let ch = i % c;
        let mut gg = 0.0;
        let mut sg = 0.0;
        for (&g, &h) in gp.iter().zip(hp) {
            let (g, h) = (g.widen(), h.widen());
            gg += g * h;
            sg += g;
        }
        grad_gamma[ch] += gg;
        sum_g[ch] += sg;
    }
    for ch in 0..c {
        sum_gx[ch] = cache.gamma[ch] * grad_gamma[ch];
        sum_g[ch] *= cache.gamma[ch];
    }

    let m = cache.count as f64;
    let mut gx = Vec::with_capacity(gy.len());
    for (i, (gp, hp)) in gy.chunks_exact(spatial).zip(xhat.chunks_exact(spatial)).enumerate() {
        let ch = i % c;
        let gamma = cache.gamma[ch];
        let inv = cache.inv_std[ch];
        if cache.batch_stats {
            let k = inv / m;
            for (&g, &h) in gp.iter().zip(hp) {
                let d = gamma * g.widen();
                gx.push(S::cast(k * (m * d - sum_g[ch] - h.widen() * sum_gx[ch])));
            }
        } else {
            gx.extend(gp.iter().map(|&g| S::cast(gamma * inv * g.widen())));
        }
    }
    Ok((Tensor::from_vec(grad_y.shape(), gx)?, grad_gamma))
}
