//! Result files written under an output directory.

use std::fmt::Write as _;
use std::path::Path;

use bntt_core::analysis::{EarlyExitPolicy, EnergyReport, RobustnessPoint, SpikeStats};
use bntt_core::network::{EpochMetrics, LayerKind, NetworkState};
use serde::Serialize;

use crate::error::{DataError, Result};

pub const METRICS_CSV: &str = "metrics.csv";
pub const SPIKES_CSV: &str = "spikes.csv";
pub const ENERGY_TXT: &str = "energy.txt";
pub const NOISE_CSV: &str = "noise.csv";
pub const FGSM_CSV: &str = "fgsm.csv";
pub const EXIT_TXT: &str = "exit.txt";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint.bin";

/// File name of the checkpoint written after `epoch` (one-based) completes.
pub fn epoch_checkpoint(epoch: usize) -> String {
    format!("checkpoint_epoch{epoch:04}.bin")
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
    pub wall_time_s: f64,
}

impl MetricsRow {
    pub fn new(m: &EpochMetrics, wall_time_s: f64) -> Self {
        MetricsRow {
            epoch: m.epoch,
            lr: m.lr,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            eval_acc: m.eval_acc,
            wall_time_s,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::io(path, io),
        other => DataError::format(path.display().to_string(), format!("{other:?}")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

/// Append-only `metrics.csv`: the header is written on creation and every
/// row is flushed as soon as its epoch finishes.
pub struct MetricsLog {
    path: std::path::PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        Ok(MetricsLog {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.writer.serialize(row).map_err(|e| csv_err(&self.path, e))?;
        self.writer.flush().map_err(|e| DataError::io(&self.path, e))
    }
}

/// Accuracy curve with the strength column named `column` (`sigma` or `eps`).
pub fn write_curve(path: &Path, column: &str, points: &[RobustnessPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([column, "accuracy"]).map_err(|e| csv_err(path, e))?;
    for p in points {
        w.write_record([p.strength.to_string(), p.accuracy.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

fn kind_name(net: &NetworkState<f32>, l: usize) -> &'static str {
    let spec = &net.spec.layers[l];
    match spec.kind {
        LayerKind::Conv { .. } => "conv",
        LayerKind::AvgPool => "avgpool",
        LayerKind::Linear { .. } if spec.is_output => "output",
        LayerKind::Linear { .. } => "linear",
    }
}

/// Per-layer spike counts: one row for the encoder and one per layer, with
/// totals, rates and counts per timestep.
pub fn write_spikes(path: &Path, net: &NetworkState<f32>, stats: &SpikeStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = ["layer", "kind", "neurons", "spikes", "rate"]
        .map(String::from)
        .to_vec();
    header.extend((1..=stats.timesteps).map(|t| format!("t{t}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut input = vec![
        "input".to_string(),
        "encoder".into(),
        stats.input_neurons.to_string(),
        stats.input_spikes.to_string(),
        stats.input_rate().to_string(),
    ];
    input.extend(std::iter::repeat_n(String::new(), stats.timesteps));
    w.write_record(&input).map_err(|e| csv_err(path, e))?;
    for l in 0..stats.totals.len() {
        let mut row = vec![
            l.to_string(),
            kind_name(net, l).into(),
            stats.neurons[l].to_string(),
            stats.totals[l].to_string(),
            stats.rate(l).to_string(),
        ];
        row.extend(stats.per_timestep[l].iter().map(u64::to_string));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Human-readable energy summary.
pub fn write_energy(
    path: &Path,
    net: &NetworkState<f32>,
    stats: &SpikeStats,
    energy: &EnergyReport,
    accuracy: f64,
) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "samples: {}", stats.samples);
    let _ = writeln!(s, "timesteps: {}", stats.timesteps);
    let _ = writeln!(s, "accuracy: {accuracy}");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>5} {:>8} {:>14} {:>12} {:>16}",
        "layer", "kind", "flops_ann", "rate_in", "flops_snn"
    );
    for (l, (&f, (&r, &fs))) in energy
        .flops_ann
        .iter()
        .zip(energy.rates.iter().zip(&energy.flops_snn))
        .enumerate()
    {
        let _ = writeln!(s, "{l:>5} {:>8} {f:>14} {r:>12.6} {fs:>16.1}", kind_name(net, l));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "flops_ann_total: {}", energy.flops_ann.iter().sum::<u64>());
    let _ = writeln!(s, "flops_snn_total: {}", energy.flops_snn.iter().sum::<f64>());
    let _ = writeln!(s, "e_ann_pj: {}", energy.e_ann);
    let _ = writeln!(s, "e_snn_pj: {}", energy.e_snn);
    let _ = writeln!(s, "e_ann_over_e_snn: {}", energy.ratio);
    let _ = writeln!(s, "hidden_spikes_per_sample: {}", stats.hidden_spikes_per_sample());
    let _ = writeln!(s, "neuromorphic_energy: {}", energy.neuromorphic);
    write_text(path, &s)
}

/// Exit policy and the accuracies it was compared at.
pub fn write_exit(path: &Path, policy: &EarlyExitPolicy, full_acc: f64, exit_acc: f64) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "tau: {}", policy.tau);
    let _ = writeln!(s, "rule: {:?}", policy.rule);
    let _ = writeln!(s, "timesteps: {}", policy.timesteps);
    let _ = writeln!(s, "t_exit: {}", policy.t_exit);
    let _ = writeln!(s, "accuracy_full: {full_acc}");
    let _ = writeln!(s, "accuracy_exit: {exit_acc}");
    let _ = writeln!(s);
    let _ = writeln!(s, "mean |gamma| per normalized layer (rows) and timestep (columns):");
    for means in &policy.layer_means {
        let row: Vec<String> = means.iter().map(|m| format!("{m:.6}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    write_text(path, &s)
}
