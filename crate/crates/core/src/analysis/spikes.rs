use alloc::vec;
use alloc::vec::Vec;

use crate::network::{
    forward_unrolled, predict, Dataset, EvalOptions, EvalReport, ForwardOptions, NetworkState, ResolvedLayer,
    SpikeRecord,
};
use crate::numerics::{Real, Rng};
use crate::{Error, Result};

/// Spike counts accumulated over one or more inference runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeStats {
    pub samples: u64,
    pub timesteps: usize,
    /// Neurons per sample in each layer.
    pub neurons: Vec<u64>,
    pub spiking: Vec<bool>,
    /// Spikes per layer over all samples and timesteps.
    pub totals: Vec<u64>,
    /// `[layer][timestep]` spike counts.
    pub per_timestep: Vec<Vec<u64>>,
    /// Pixels per sample seen by the encoder.
    pub input_neurons: u64,
    pub input_spikes: u64,
}

impl SpikeStats {
    pub fn empty(layers: &[ResolvedLayer], input: [usize; 3], timesteps: usize) -> Self {
        let n = layers.len();
        SpikeStats {
            samples: 0,
            timesteps,
            neurons: layers.iter().map(|r| r.neurons() as u64).collect(),
            spiking: layers.iter().map(|r| r.spec.spikes()).collect(),
            totals: vec![0; n],
            per_timestep: vec![vec![0; timesteps]; n],
            input_neurons: input.iter().product::<usize>() as u64,
            input_spikes: 0,
        }
    }

    pub fn accumulate(&mut self, rec: &SpikeRecord) -> Result<()> {
        if rec.layer_counts.len() != self.totals.len() || rec.input_counts.len() != self.timesteps {
            return Err(Error::shape(
                "spike_rate",
                &[self.totals.len(), self.timesteps],
                &[rec.layer_counts.len(), rec.input_counts.len()],
            ));
        }
        self.samples += rec.batch as u64;
        self.input_spikes += rec.input_counts.iter().sum::<u64>();
        for (l, counts) in rec.layer_counts.iter().enumerate() {
            for (t, &c) in counts.iter().enumerate() {
                self.per_timestep[l][t] += c;
                self.totals[l] += c;
            }
        }
        Ok(())
    }

    /// `R_s(l)`: spikes of layer `l` over all timesteps per neuron and sample.
    pub fn rate(&self, l: usize) -> f64 {
        let d = self.neurons[l] * self.samples;
        if d == 0 {
            0.0
        } else {
            self.totals[l] as f64 / d as f64
        }
    }

    /// Spikes per pixel and sample emitted by the encoder.
    pub fn input_rate(&self) -> f64 {
        let d = self.input_neurons * self.samples;
        if d == 0 {
            0.0
        } else {
            self.input_spikes as f64 / d as f64
        }
    }

    /// Spikes of all hidden layers per sample.
    pub fn hidden_spikes_per_sample(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.totals.iter().sum::<u64>() as f64 / self.samples as f64
    }
}

/// Aggregates the spike counts of completed inference runs on `net`.
pub fn spike_rate<S: Real>(net: &NetworkState<S>, records: &[SpikeRecord]) -> Result<SpikeStats> {
    let steps = records.first().map_or(net.timesteps(), |r| r.input_counts.len());
    let mut stats = SpikeStats::empty(net.resolved(), net.spec.input, steps);
    for r in records {
        stats.accumulate(r)?;
    }
    Ok(stats)
}

/// Runs evaluation over `data` and returns spike statistics with the accuracy.
pub fn collect_spike_stats<S: Real>(
    net: &NetworkState<S>,
    data: &Dataset<S>,
    opts: &EvalOptions,
    rng: &Rng,
) -> Result<(SpikeStats, EvalReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset { op: "spike_rate" });
    }
    let fwd = ForwardOptions {
        timesteps: opts.timesteps,
        ..ForwardOptions::eval(opts.episode)
    };
    let steps = opts.timesteps.unwrap_or(net.timesteps());
    let mut stats = SpikeStats::empty(net.resolved(), net.spec.input, steps);
    let mut report = EvalReport {
        correct: 0,
        total: data.len(),
        predictions: Vec::with_capacity(data.len()),
    };
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(opts.batch_size.max(1)) {
        let (images, labels, ids) = data.batch(idx)?;
        let out = forward_unrolled(net, &images, &ids, rng, &fwd)?;
        stats.accumulate(&out.spikes)?;
        for (p, y) in predict(&out.potentials).into_iter().zip(&labels) {
            report.correct += usize::from(p == *y);
            report.predictions.push(p);
        }
    }
    Ok((stats, report))
}
