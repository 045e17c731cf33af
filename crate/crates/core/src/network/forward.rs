use alloc::vec;
use alloc::vec::Vec;

use super::spec::LayerKind;
use super::state::{NetworkState, SpikeMode};
use crate::bntt::BnttBatchCache;
use crate::encoding::{check_intensities, fill_batch, SpikeFrame};
use crate::neuron::{smooth, surrogate};
use crate::numerics::{avgpool2, conv2d, linear, Real, Rng, Tensor};
use crate::{Error, Result};

/// Whether normalization uses minibatch statistics or the running averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Knobs of one unrolled forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub mode: Mode,
    /// Which pass over the data the Poisson frames belong to.
    pub episode: u64,
    /// Stop after this many timesteps (early exit); `None` runs all of them.
    pub timesteps: Option<usize>,
    /// Keep what the backward pass needs.
    pub keep_tape: bool,
    /// Keep every spike frame of every spiking layer.
    pub record_frames: bool,
}

impl ForwardOptions {
    pub fn train(episode: u64) -> Self {
        ForwardOptions {
            mode: Mode::Train,
            episode,
            timesteps: None,
            keep_tape: true,
            record_frames: false,
        }
    }

    pub fn eval(episode: u64) -> Self {
        ForwardOptions {
            mode: Mode::Eval,
            episode,
            timesteps: None,
            keep_tape: false,
            record_frames: false,
        }
    }
}

/// Saved values of one layer at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerStep<S> {
    /// Input the weighted layer consumed.
    pub input: Option<Tensor<S>>,
    pub in_shape: Vec<usize>,
    pub norm: Option<BnttBatchCache<S>>,
    /// Surrogate derivative at the pre-reset potential.
    pub surrogate: Option<Tensor<S>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape<S> {
    pub(crate) steps: Vec<Vec<LayerStep<S>>>,
    pub(crate) batch: usize,
    pub(crate) mode: Mode,
}

impl<S> Tape<S> {
    pub fn timesteps(&self) -> usize {
        self.steps.len()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Spike counts of one forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRecord {
    pub batch: usize,
    /// Encoder spikes per timestep.
    pub input_counts: Vec<u64>,
    /// `[layer][timestep]`; always zero for layers that do not spike.
    pub layer_counts: Vec<Vec<u64>>,
    /// `[layer][timestep]` frames of spiking layers, when recorded.
    pub frames: Option<Vec<Vec<SpikeFrame>>>,
    /// Encoder frames per timestep, when recorded.
    pub input_frames: Option<Vec<SpikeFrame>>,
}

/// Result of [`forward_unrolled`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<S> {
    /// Output-layer membrane potentials after the last timestep, `[m, classes]`.
    pub potentials: Tensor<S>,
    pub spikes: SpikeRecord,
    pub tape: Option<Tape<S>>,
    /// Minibatch `(mean, variance)` per `[timestep][layer]` in training mode.
    pub batch_stats: Vec<Vec<Option<(Vec<f64>, Vec<f64>)>>>,
}

/// Whether layer `l` reads its predecessor's output from the previous timestep.
pub(crate) fn reads_delayed<S: Real>(net: &NetworkState<S>, l: usize) -> bool {
    net.model.delayed_layer_input
        && net.resolved()[l].spec.has_weight()
        && net.resolved()[..l].iter().any(|r| r.spec.has_weight())
}

fn weighted<S: Real>(kind: LayerKind, x: &Tensor<S>, w: &Tensor<S>) -> Result<Tensor<S>> {
    match kind {
        LayerKind::Conv { stride, pad, .. } => conv2d(x, w, stride, pad),
        LayerKind::Linear { .. } => linear(x, w),
        LayerKind::AvgPool => unreachable!("pooling has no weights"),
    }
}

/// Runs the network over `T` timesteps of Poisson frames drawn from `images`
/// (`[m, C, H, W]`, intensities in `[0, 1]`; `sample_ids` key the frames).
///
/// Within a timestep every layer consumes its predecessor's output of the same
/// timestep, unless [`ModelConfig::delayed_layer_input`](super::ModelConfig) is set.
/// Hidden layers apply weights, normalization and a LIF step; the output layer
/// adds its normalized weighted input to a leak-free, non-spiking potential.
/// Training mode reports the minibatch statistics instead of folding them into
/// the running averages; see [`NetworkState::commit_batch_stats`].
pub fn forward_unrolled<S: Real>(
    net: &NetworkState<S>,
    images: &Tensor<S>,
    sample_ids: &[u64],
    rng: &Rng,
    opts: &ForwardOptions,
) -> Result<ForwardOutput<S>> {
    let op = "forward_unrolled";
    let resolved = net.resolved();
    let t_max = net.timesteps();
    let steps = opts.timesteps.unwrap_or(t_max);
    if steps == 0 || steps > t_max {
        return Err(Error::Timestep {
            op,
            t: steps,
            max: t_max,
        });
    }
    let m = images.batch();
    let mut want = vec![m];
    want.extend_from_slice(&net.spec.input);
    if images.shape() != &want[..] {
        return Err(Error::shape(op, &want, images.shape()));
    }
    if sample_ids.len() != m {
        return Err(Error::shape(op, &[m], &[sample_ids.len()]));
    }
    check_intensities(images.data())?;

    let nl = resolved.len();
    let theta = S::cast(net.model.theta);
    let lambda = S::cast(net.model.lambda);
    let alpha = S::cast(net.model.alpha);
    let smooth_mode = net.model.spike_mode == SpikeMode::Smooth;

    let shape_of = |s: &[usize]| {
        let mut v = vec![m];
        v.extend_from_slice(s);
        v
    };
    let mut membrane: Vec<Option<Vec<S>>> = resolved
        .iter()
        .map(|r| (r.spec.has_weight()).then(|| vec![S::ZERO; m * r.neurons()]))
        .collect();
    let mut delayed: Vec<Option<Tensor<S>>> = (0..nl)
        .map(|l| reads_delayed(net, l).then(|| Tensor::zeros(&shape_of(&resolved[l].in_shape))))
        .collect();

    let mut spikes = SpikeRecord {
        batch: m,
        input_counts: Vec::with_capacity(steps),
        layer_counts: vec![vec![0; steps]; nl],
        frames: opts.record_frames.then(|| vec![Vec::with_capacity(steps); nl]),
        input_frames: opts.record_frames.then(|| Vec::with_capacity(steps)),
    };
    let mut tape_steps = Vec::with_capacity(if opts.keep_tape { steps } else { 0 });
    let mut batch_stats = Vec::with_capacity(steps);
    let mut frame = Tensor::<S>::zeros(images.shape());

    for t in 0..steps {
        fill_batch(images, sample_ids, rng, opts.episode, t, &mut frame);
        spikes
            .input_counts
            .push(frame.data().iter().filter(|&&v| v != S::ZERO).count() as u64);
        if let Some(f) = spikes.input_frames.as_mut() {
            f.push(SpikeFrame::from_tensor(&frame));
        }
        let mut records = Vec::with_capacity(if opts.keep_tape { nl } else { 0 });
        let mut stats_t = vec![None; nl];
        let mut current = frame.clone();

        for (l, r) in resolved.iter().enumerate() {
            let input = match delayed[l].as_mut() {
                Some(buf) => core::mem::replace(buf, current),
                None => current,
            };
            let params = &net.layers[l];
            let mut record = LayerStep {
                input: None,
                in_shape: input.shape().to_vec(),
                norm: None,
                surrogate: None,
            };
            if r.spec.kind == LayerKind::AvgPool {
                current = avgpool2(&input)?;
                if opts.keep_tape {
                    records.push(record);
                }
                continue;
            }

            let w = params.weight.as_ref().expect("weight layers carry weights");
            let z = weighted(r.spec.kind, &input, w)?;
            let y = match (&params.norm, opts.mode) {
                (Some(bn), Mode::Train) => {
                    let (y, cache, mean, var) = bn.normalize_batch(&z, t)?;
                    stats_t[l] = Some((mean, var));
                    record.norm = opts.keep_tape.then_some(cache);
                    y
                }
                (Some(bn), Mode::Eval) => {
                    let (y, cache) = bn.eval_with_cache(&z, t, opts.keep_tape)?;
                    record.norm = cache;
                    y
                }
                (None, _) => z,
            };
            if !y.all_finite() {
                return Err(Error::NonFinite { op });
            }
            if opts.keep_tape {
                record.input = Some(input);
            }
            let u = membrane[l].as_mut().expect("weight layers carry a membrane");

            if r.spec.is_output {
                for (u, &v) in u.iter_mut().zip(y.data()) {
                    *u += v;
                }
                current = y;
            } else {
                let mut out = y.into_vec();
                let mut sg = if opts.keep_tape {
                    vec![S::ZERO; out.len()]
                } else {
                    Vec::new()
                };
                let mut count = 0;
                for (i, (u, o)) in u.iter_mut().zip(out.iter_mut()).enumerate() {
                    let v = lambda * *u + *o;
                    let fired = v >= theta;
                    if opts.keep_tape {
                        sg[i] = surrogate(v, theta, alpha);
                    }
                    *o = if smooth_mode {
                        smooth(v, theta, alpha)
                    } else if fired {
                        S::ONE
                    } else {
                        S::ZERO
                    };
                    if fired {
                        *u = v - theta;
                        count += 1;
                    } else {
                        *u = v;
                    }
                }
                spikes.layer_counts[l][t] = count;
                let shape = shape_of(&r.out_shape);
                if opts.keep_tape {
                    record.surrogate = Some(Tensor::from_vec(&shape, sg)?);
                }
                current = Tensor::from_vec(&shape, out)?;
                if let Some(f) = spikes.frames.as_mut() {
                    f[l].push(SpikeFrame::from_tensor(&current));
                }
            }
            if opts.keep_tape {
                records.push(record);
            }
        }
        if opts.keep_tape {
            tape_steps.push(records);
        }
        batch_stats.push(stats_t);
    }

    let out = membrane[nl - 1].take().expect("output layer carries weights");
    Ok(ForwardOutput {
        potentials: Tensor::from_vec(&[m, net.classes()], out)?,
        spikes,
        tape: opts.keep_tape.then_some(Tape {
            steps: tape_steps,
            batch: m,
            mode: opts.mode,
        }),
        batch_stats,
    })
}

impl<S: Real> NetworkState<S> {
    /// Folds the minibatch statistics of a training-mode forward pass into the
    /// running averages, timestep by timestep.
    pub fn commit_batch_stats(&mut self, out: &ForwardOutput<S>) -> Result<()> {
        for (t, per_layer) in out.batch_stats.iter().enumerate() {
            for (l, stats) in per_layer.iter().enumerate() {
                if let (Some((mean, var)), Some(bn)) = (stats, self.layers[l].norm.as_mut()) {
                    bn.update_running_stats(t, mean, var)?;
                }
            }
        }
        Ok(())
    }
}
