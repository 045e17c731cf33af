//! Layer graph, unrolled forward pass, loss, backpropagation through time and
//! the SGD training loop.

mod backward;
mod forward;
mod loss;
mod optim;
mod spec;
mod state;
mod train;

pub use backward::backward_bptt;
pub use forward::{forward_unrolled, ForwardOptions, ForwardOutput, Mode, SpikeRecord, Tape};
pub use loss::{loss_and_output_grad, predict};
pub use optim::{sgd_step, SgdConfig};
pub use spec::{LayerKind, LayerSpec, NetSpec, Norm, ResolvedLayer};
pub use state::{Gradients, LayerParams, ModelConfig, NetworkState, SpikeMode};
pub use train::{
    augment_batch, batches_per_epoch, evaluate, evaluate_with, scheduled_lr, train, Dataset, EpochMetrics, EvalOptions,
    EvalReport, StepOutcome, TrainConfig, TrainObserver, Trainer, ATTACK_EPISODE, EVAL_EPISODE,
};
