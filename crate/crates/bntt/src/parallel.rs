//! Data-parallel evaluation.
//!
//! Batches are independent in evaluation mode (running statistics, Poisson
//! streams keyed by sample id), so they run on the rayon pool and are merged
//! in batch order. Results do not depend on the number of worker threads.

use bntt_core::analysis::{add_gaussian_noise, fgsm_attack, SpikeStats};
use bntt_core::network::{forward_unrolled, predict, Dataset, EvalOptions, EvalReport, ForwardOptions, NetworkState};
use bntt_core::{Rng, Tensor};
use rayon::prelude::*;

use crate::error::{DataError, Result};

/// Sizes the global pool from `SNN_NUM_THREADS` (all cores when unset).
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var("SNN_NUM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| DataError::Mismatch(format!("SNN_NUM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| DataError::Mismatch(format!("cannot size the worker pool: {e}")))
}

/// Input perturbation applied to each batch before encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    None,
    Gaussian { sigma: f64 },
    Fgsm { eps: f64 },
}

impl Perturbation {
    fn apply(
        &self,
        net: &NetworkState<f32>,
        x: &mut Tensor<f32>,
        labels: &[usize],
        ids: &[u64],
        rng: &Rng,
    ) -> Result<()> {
        match *self {
            Perturbation::None => {}
            Perturbation::Gaussian { sigma } => add_gaussian_noise(x, ids, sigma, rng)?,
            Perturbation::Fgsm { eps } if eps > 0.0 => *x = fgsm_attack(net, x, labels, ids, eps, rng)?,
            Perturbation::Fgsm { .. } => {}
        }
        Ok(())
    }
}

/// Accuracy, predictions and spike counts of one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: EvalReport,
    pub stats: SpikeStats,
}

/// Evaluates `net` on `data` with the batches spread over the worker pool.
pub fn evaluate_parallel(
    net: &NetworkState<f32>,
    data: &Dataset<f32>,
    opts: &EvalOptions,
    rng: &Rng,
    perturb: Perturbation,
) -> Result<EvalRun> {
    if data.is_empty() {
        return Err(bntt_core::Error::EmptyDataset { op: "evaluate" }.into());
    }
    if opts.batch_size == 0 {
        return Err(DataError::Mismatch("evaluation batch size must be positive".into()));
    }
    let fwd = ForwardOptions {
        timesteps: opts.timesteps,
        ..ForwardOptions::eval(opts.episode)
    };
    let all: Vec<usize> = (0..data.len()).collect();
    let parts: Vec<_> = all
        .par_chunks(opts.batch_size)
        .map(|idx| -> Result<_> {
            let (mut images, labels, ids) = data.batch(idx)?;
            perturb.apply(net, &mut images, &labels, &ids, rng)?;
            let out = forward_unrolled(net, &images, &ids, rng, &fwd)?;
            let correct = predict(&out.potentials);
            Ok((correct, labels, out.spikes))
        })
        .collect::<Result<_>>()?;

    let steps = opts.timesteps.unwrap_or(net.timesteps());
    let mut stats = SpikeStats::empty(net.resolved(), net.spec.input, steps);
    let mut report = EvalReport {
        correct: 0,
        total: data.len(),
        predictions: Vec::with_capacity(data.len()),
    };
    for (pred, labels, spikes) in parts {
        stats.accumulate(&spikes)?;
        report.correct += pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
        report.predictions.extend(pred);
    }
    Ok(EvalRun { report, stats })
}
