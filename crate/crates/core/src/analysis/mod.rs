//! Post-training analysis: spike statistics, energy estimates, early exit,
//! the threshold-equivalence probe and robustness evaluation.

mod energy;
mod exit;
mod robustness;
mod spikes;
mod threshold;

pub use energy::{energy_report, flops_ann, EnergyReport, EnergyTable, RateAttribution};
pub use exit::{compute_exit_time, exit_time_from_means, layer_gamma_means, EarlyExitPolicy, ExitRule};
pub use robustness::{add_gaussian_noise, fgsm_attack, fgsm_eval, gaussian_noise_eval, RobustnessPoint};
pub use spikes::{collect_spike_stats, spike_rate, SpikeStats};
pub use threshold::{threshold_equivalence_check, SpikeTrainPair};
