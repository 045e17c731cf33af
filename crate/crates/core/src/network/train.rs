use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::backward::backward_bptt;
use super::forward::{forward_unrolled, ForwardOptions};
use super::loss::{loss_and_output_grad, predict};
use super::optim::{sgd_step, SgdConfig};
use super::spec::NetSpec;
use super::state::{ModelConfig, NetworkState};
use crate::encoding::check_intensities;
use crate::numerics::{Real, Rng, Stream, Tensor};
use crate::{Error, Result};

/// Poisson episode used for every evaluation pass.
pub const EVAL_EPISODE: u64 = u64::MAX;
/// Poisson episode used when estimating input gradients for attacks.
pub const ATTACK_EPISODE: u64 = u64::MAX - 1;

/// Optimization settings of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub sgd: SgdConfig,
    pub seed: u64,
    /// Random 4-pixel-padded crops and horizontal flips.
    pub augment: bool,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 1,
            base_lr: 0.3,
            sgd: SgdConfig::default(),
            seed: 0,
            augment: false,
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "train_config";
        if self.batch_size < 2 || self.eval_batch_size == 0 {
            return Err(Error::invalid(op, "batch size must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid(op, "need at least one epoch"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid(op, "learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.sgd.momentum) || !(self.sgd.weight_decay >= 0.0) {
            return Err(Error::invalid(op, "need momentum in [0, 1) and weight decay >= 0"));
        }
        Ok(())
    }
}

/// Step schedule: the rate drops tenfold once `done / total` reaches 50%, 70%
/// and 90%. `done` and `total` may count epochs or iterations.
pub fn scheduled_lr(base: f64, done: u64, total: u64) -> f64 {
    let drops = [5u64, 7, 9]
        .iter()
        .filter(|&&k| done as u128 * 10 >= total as u128 * k as u128)
        .count();
    let mut lr = base;
    for _ in 0..drops {
        lr *= 0.1;
    }
    lr
}

/// Labelled images `[N, C, H, W]` with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub images: Tensor<S>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<S: Real> Dataset<S> {
    pub fn new(images: Tensor<S>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let op = "dataset";
        images.dims4(op)?;
        if labels.len() != images.batch() {
            return Err(Error::shape(op, &[images.batch()], &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Label { op, label, classes });
        }
        check_intensities(images.data())?;
        Ok(Dataset {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]` of one sample.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Images, labels and sample ids (dataset indices) of the given samples.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<S>, Vec<usize>, Vec<u64>)> {
        Ok((
            self.images.gather(indices)?,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| i as u64).collect(),
        ))
    }

    /// The first `n` samples (or all of them).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        if n == 0 {
            return Err(Error::EmptyDataset { op: "dataset" });
        }
        Ok(Dataset {
            images: self.images.slice_batch(0, n)?,
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        })
    }
}

/// Pads each image by 4 zero pixels, takes a random crop of the original size
/// and flips it horizontally with probability ½. Draws are keyed by
/// `(epoch, sample id)`.
pub fn augment_batch<S: Real>(images: &Tensor<S>, sample_ids: &[u64], rng: &Rng, epoch: u64) -> Result<Tensor<S>> {
    const PAD: usize = 4;
    let [b, c, h, w] = images.dims4("augment")?;
    if sample_ids.len() != b {
        return Err(Error::shape("augment", &[b], &[sample_ids.len()]));
    }
    let mut out = Tensor::zeros(images.shape());
    let len = c * h * w;
    for ((src, dst), &id) in images
        .data()
        .chunks_exact(len)
        .zip(out.data_mut().chunks_exact_mut(len))
        .zip(sample_ids)
    {
        let mut r = rng.stream(Stream::Augment, &[epoch, id]);
        let dy = r.random_range(0..=2 * PAD);
        let dx = r.random_range(0..=2 * PAD);
        let flip = r.random_bool(0.5);
        for ch in 0..c {
            for y in 0..h {
                let sy = (y + dy) as isize - PAD as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for x in 0..w {
                    let cx = if flip { w - 1 - x } else { x };
                    let sx = (cx + dx) as isize - PAD as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    dst[(ch * h + y) * w + x] = src[(ch * h + sy as usize) * w + sx as usize];
                }
            }
        }
    }
    Ok(out)
}

/// Per-epoch summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// One-based.
    pub epoch: usize,
    /// Rate used by the epoch's first minibatch.
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
}

/// Outcome of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub correct: usize,
    pub lr: f64,
}

/// Callbacks invoked while training. Epoch and batch numbers are one-based.
pub trait TrainObserver {
    fn batch_done(&mut self, _epoch: usize, _batch: usize, _outcome: &StepOutcome) {}
    fn epoch_done(&mut self, _metrics: &EpochMetrics) {}
}

impl TrainObserver for () {}

/// Minibatches per epoch: full batches plus a trailing one if it holds at least
/// two samples (batch statistics need two).
pub fn batches_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples / batch_size + usize::from(samples % batch_size >= 2)
}

/// Holds the network and optimizer progress of a training run.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    pub net: NetworkState<S>,
    pub config: TrainConfig,
    rng: Rng,
    iteration: u64,
    total_iterations: u64,
}

impl<S: Real> Trainer<S> {
    pub fn new(spec: &NetSpec, model: ModelConfig, config: TrainConfig, train_samples: usize) -> Result<Self> {
        config.validate()?;
        let net = NetworkState::init(spec, model, &Rng::new(config.seed))?;
        Self::resume(net, config, train_samples, 0)
    }

    /// Continues a run from `net` after `iteration` completed steps.
    pub fn resume(net: NetworkState<S>, config: TrainConfig, train_samples: usize, iteration: u64) -> Result<Self> {
        config.validate()?;
        let per_epoch = batches_per_epoch(train_samples, config.batch_size);
        if per_epoch == 0 {
            return Err(Error::EmptyDataset { op: "train" });
        }
        Ok(Trainer {
            net,
            config,
            rng: Rng::new(config.seed),
            iteration,
            total_iterations: (per_epoch * config.epochs) as u64,
        })
    }

    pub fn rng(&self) -> &Rng {
        &self.rng
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Rate of the next step.
    pub fn lr(&self) -> f64 {
        scheduled_lr(self.config.base_lr, self.iteration, self.total_iterations)
    }

    /// Sample order of an epoch (zero-based).
    pub fn epoch_order(&self, epoch: usize, samples: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..samples).collect();
        order.shuffle(&mut self.rng.stream(Stream::Shuffle, &[epoch as u64]));
        order
    }

    /// Forward, loss, BPTT, SGD and running-statistics update on one minibatch.
    /// `epoch` is zero-based and doubles as the Poisson episode.
    pub fn train_step(
        &mut self,
        images: &Tensor<S>,
        labels: &[usize],
        sample_ids: &[u64],
        epoch: usize,
        batch: usize,
    ) -> Result<StepOutcome> {
        let diverged = |loss| Error::Diverged {
            epoch: epoch + 1,
            batch,
            loss,
        };
        let out = match forward_unrolled(
            &self.net,
            images,
            sample_ids,
            &self.rng,
            &ForwardOptions::train(epoch as u64),
        ) {
            Err(Error::NonFinite { .. }) => return Err(diverged(f64::NAN)),
            r => r?,
        };
        let (loss, grad) = match loss_and_output_grad(&out.potentials, labels) {
            Err(Error::NonFinite { .. }) => return Err(diverged(f64::NAN)),
            r => r?,
        };
        if !loss.is_finite() {
            return Err(diverged(loss));
        }
        let correct = predict(&out.potentials)
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        let tape = out.tape.as_ref().expect("training keeps the tape");
        let (grads, _) = backward_bptt(&self.net, tape, &grad, false)?;
        let lr = self.lr();
        sgd_step(&mut self.net, &grads, lr, &self.config.sgd)?;
        self.net.commit_batch_stats(&out)?;
        self.iteration += 1;
        Ok(StepOutcome { loss, correct, lr })
    }

    /// One pass over `data` in shuffled minibatches. Returns mean loss and accuracy.
    pub fn run_epoch(
        &mut self,
        epoch: usize,
        data: &Dataset<S>,
        observer: &mut dyn TrainObserver,
    ) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(Error::EmptyDataset { op: "train" });
        }
        let order = self.epoch_order(epoch, data.len());
        let m = self.config.batch_size;
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (b, idx) in order.chunks(m).enumerate() {
            if idx.len() < 2 {
                break;
            }
            let (mut images, labels, ids) = data.batch(idx)?;
            if self.config.augment {
                images = augment_batch(&images, &ids, &self.rng, epoch as u64)?;
            }
            let outcome = self.train_step(&images, &labels, &ids, epoch, b + 1)?;
            observer.batch_done(epoch + 1, b + 1, &outcome);
            loss_sum += outcome.loss * idx.len() as f64;
            correct += outcome.correct;
            seen += idx.len();
        }
        Ok((loss_sum / seen as f64, correct as f64 / seen as f64))
    }
}

/// Trains a freshly initialized network; evaluates on `eval_set` after every epoch.
pub fn train<S: Real>(
    spec: &NetSpec,
    model: ModelConfig,
    config: &TrainConfig,
    train_set: &Dataset<S>,
    eval_set: Option<&Dataset<S>>,
    observer: &mut dyn TrainObserver,
) -> Result<(NetworkState<S>, Vec<EpochMetrics>)> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset { op: "train" });
    }
    let mut trainer = Trainer::new(spec, model, *config, train_set.len())?;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = trainer.lr();
        let (train_loss, train_acc) = trainer.run_epoch(epoch, train_set, observer)?;
        let eval_acc = match eval_set {
            Some(d) => Some(
                evaluate(
                    &trainer.net,
                    d,
                    &EvalOptions::new(config.eval_batch_size),
                    trainer.rng(),
                )?
                .accuracy(),
            ),
            None => None,
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss,
            train_acc,
            eval_acc,
        };
        observer.epoch_done(&metrics);
        log.push(metrics);
    }
    Ok((trainer.net, log))
}

/// Settings of an evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub episode: u64,
    /// Early-exit horizon; `None` runs every timestep.
    pub timesteps: Option<usize>,
}

impl EvalOptions {
    pub fn new(batch_size: usize) -> Self {
        EvalOptions {
            batch_size,
            episode: EVAL_EPISODE,
            timesteps: None,
        }
    }
}

/// Outcome of an evaluation pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Classifies every sample with running statistics.
pub fn evaluate<S: Real>(
    net: &NetworkState<S>,
    data: &Dataset<S>,
    opts: &EvalOptions,
    rng: &Rng,
) -> Result<EvalReport> {
    evaluate_with(net, data, opts, rng, |_, _, _| Ok(()))
}

/// [`evaluate`] with each batch passed through `perturb(images, labels, ids)`
/// before encoding.
pub fn evaluate_with<S: Real>(
    net: &NetworkState<S>,
    data: &Dataset<S>,
    opts: &EvalOptions,
    rng: &Rng,
    mut perturb: impl FnMut(&mut Tensor<S>, &[usize], &[u64]) -> Result<()>,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset { op: "evaluate" });
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("evaluate", "batch size must be positive"));
    }
    let fwd = ForwardOptions {
        timesteps: opts.timesteps,
        ..ForwardOptions::eval(opts.episode)
    };
    let all: Vec<usize> = (0..data.len()).collect();
    let mut predictions = Vec::with_capacity(data.len());
    let mut correct = 0;
    for idx in all.chunks(opts.batch_size) {
        let (mut images, labels, ids) = data.batch(idx)?;
        perturb(&mut images, &labels, &ids)?;
        let out = forward_unrolled(net, &images, &ids, rng, &fwd)?;
        for (p, y) in predict(&out.potentials).into_iter().zip(&labels) {
            correct += usize::from(p == *y);
            predictions.push(p);
        }
    }
    Ok(EvalReport {
        correct,
        total: data.len(),
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn schedule_milestones() {
        let lr = |e| scheduled_lr(0.3, e, 120);
        assert_eq!(lr(59), 0.3);
        assert!((lr(60) - 0.03).abs() < 1e-15);
        assert!((lr(83) - 0.03).abs() < 1e-15);
        assert!((lr(84) - 0.003).abs() < 1e-15);
        assert!((lr(107) - 0.003).abs() < 1e-16);
        assert!((lr(108) - 0.0003).abs() < 1e-17);
    }

    #[test]
    fn batches_drop_singleton_tail() {
        assert_eq!(batches_per_epoch(10, 4), 3);
        assert_eq!(batches_per_epoch(9, 4), 2);
        assert_eq!(batches_per_epoch(1, 4), 0);
    }

    #[test]
    fn augment_is_keyed_and_preserves_mass_when_centered() {
        let rng = Rng::new(1);
        let img = Tensor::<f32>::from_fn(&[2, 1, 6, 6], |i| (i % 7) as f32 / 7.0);
        let a = augment_batch(&img, &[3, 4], &rng, 0).unwrap();
        assert_eq!(a, augment_batch(&img, &[3, 4], &rng, 0).unwrap());
        assert_ne!(a, augment_batch(&img, &[3, 4], &rng, 1).unwrap());
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn dataset_validation() {
        let img = Tensor::<f32>::zeros(&[2, 1, 2, 2]);
        assert!(Dataset::new(img.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(img.clone(), vec![0], 2).is_err());
        assert!(Dataset::new(img.map(|_| 2.0), vec![0, 1], 2).is_err());
        assert_eq!(Dataset::new(img, vec![0, 1], 2).unwrap().len(), 2);
    }
}
