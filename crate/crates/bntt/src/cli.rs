//! Command-line interface of the `bntt` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use bntt_core::analysis::{compute_exit_time, energy_report, EnergyTable, ExitRule, RateAttribution, RobustnessPoint};
use bntt_core::network::{Dataset, EpochMetrics, EvalOptions, StepOutcome, TrainObserver, Trainer};
use bntt_core::Rng;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataio::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::dataio::config::RunConfig;
use crate::dataio::{limit, load_split, DatasetKind};
use crate::manifest::RunManifest;
use crate::parallel::{evaluate_parallel, Perturbation};
use crate::report::{self, MetricsRow};

#[derive(Debug, Parser)]
#[command(
    name = "bntt",
    version,
    about = "Train and analyze spiking networks with batch normalization through time"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes metrics.csv and checkpoints under --out.
    Train(TrainArgs),
    /// Test accuracy of a checkpoint, optionally with early exit.
    Eval(EvalArgs),
    /// Spike rates and energy estimates; writes spikes.csv and energy.txt.
    Energy(EnergyArgs),
    /// Accuracy under Gaussian input noise; writes noise.csv.
    Noise(NoiseArgs),
    /// Accuracy under FGSM attacks; writes fgsm.csv.
    Attack(AttackArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory with MNIST IDX files or CIFAR-10 binary batches.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Checkpoint and test data shared by the analysis commands.
#[derive(Debug, Args)]
pub struct Source {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Use only the first N test samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExitRuleArg {
    /// Last timestep at which any layer's mean |gamma| reaches tau.
    LastAbove,
    /// Stop before the first timestep at which every layer is below tau.
    FirstAllBelow,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Exit at the timestep derived from the trained scales.
    #[arg(long, allow_negative_numbers = true)]
    pub early_exit_tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = ExitRuleArg::LastAbove)]
    pub exit_rule: ExitRuleArg,
    /// Cap on the number of timesteps.
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// Write manifest.json (and exit.txt with --early-exit-tau) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timesteps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated noise standard deviations.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated attack strengths.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub eps: Vec<f64>,
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Energy(a) => energy(a),
        Command::Noise(a) => noise(a),
        Command::Attack(a) => attack(a),
    }
}

struct Progress {
    batches: usize,
}

impl TrainObserver for Progress {
    fn batch_done(&mut self, epoch: usize, batch: usize, o: &StepOutcome) {
        if batch % 100 == 0 || batch == self.batches {
            eprintln!(
                "epoch {epoch} batch {batch}/{} loss {:.4} lr {:.3e}",
                self.batches, o.loss, o.lr
            );
        }
    }

    fn epoch_done(&mut self, m: &EpochMetrics) {
        let eval = m.eval_acc.map_or_else(|| "-".into(), |a| format!("{a:.4}"));
        eprintln!(
            "epoch {} done: train loss {:.4} train acc {:.4} test acc {eval}",
            m.epoch, m.train_loss, m.train_acc
        );
    }
}

fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let kind = match cfg.dataset {
        Some(k) => k,
        None => DatasetKind::detect(&a.data)?,
    };
    cfg.dataset = Some(kind);
    RunManifest::new("train", &cfg.to_text(), cfg.train.seed, &a.out).write()?;
    cfg.validate(kind)?;

    let train_set = limit(load_split(kind, &a.data, true)?, cfg.train_limit)?;
    let test_set = limit(load_split(kind, &a.data, false)?, cfg.test_limit)?;
    let spec = cfg.net_spec(kind);
    let tcfg = cfg.train_config(kind);
    let mut trainer = Trainer::new(&spec, cfg.model, tcfg, train_set.len())?;
    let mut progress = Progress {
        batches: bntt_core::network::batches_per_epoch(train_set.len(), tcfg.batch_size),
    };
    let start = Instant::now();
    let mut log = report::MetricsLog::create(&a.out.join(report::METRICS_CSV))?;
    let mut last_acc = None;
    for epoch in 0..tcfg.epochs {
        let lr = trainer.lr();
        let (train_loss, train_acc) = trainer.run_epoch(epoch, &train_set, &mut progress)?;
        let eval = evaluate_parallel(
            &trainer.net,
            &test_set,
            &EvalOptions::new(tcfg.eval_batch_size),
            trainer.rng(),
            Perturbation::None,
        )?;
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss,
            train_acc,
            eval_acc: Some(eval.report.accuracy()),
        };
        progress.epoch_done(&metrics);
        log.append(&MetricsRow::new(&metrics, start.elapsed().as_secs_f64()))?;
        last_acc = metrics.eval_acc;
        let ck = Checkpoint {
            net: trainer.net.clone(),
            seed: tcfg.seed,
            epoch: epoch + 1,
            iteration: trainer.iteration(),
        };
        if epoch + 1 == tcfg.epochs {
            save_checkpoint(&a.out.join(report::FINAL_CHECKPOINT), &ck)?;
        } else if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            save_checkpoint(&a.out.join(report::epoch_checkpoint(epoch + 1)), &ck)?;
        }
    }
    println!("test accuracy: {}", last_acc.unwrap_or(0.0));
    println!("checkpoint: {}", a.out.join(report::FINAL_CHECKPOINT).display());
    Ok(())
}

/// Loaded checkpoint plus the matching test split.
struct Loaded {
    ck: Checkpoint,
    test: Dataset<f32>,
    rng: Rng,
}

/// Reads the checkpoint, records the run in `out` (when given) and loads the test split.
fn open(src: &Source, command: &str, settings: &str, out: Option<&Path>) -> anyhow::Result<Loaded> {
    let ck = load_checkpoint(&src.checkpoint, None)?;
    if let Some(out) = out {
        let text = format!(
            "input.checkpoint = {}\ninput.data = {}\ninput.limit = {}\ninput.batch_size = {}\n{settings}",
            src.checkpoint.display(),
            src.data.display(),
            src.limit.map_or_else(|| "all".into(), |n| n.to_string()),
            src.batch_size
        );
        RunManifest::new(command, &text, ck.seed, out).write()?;
    }
    let kind = DatasetKind::detect(&src.data)?;
    if kind.input() != ck.net.spec.input || kind.classes() != ck.net.classes() {
        bail!(
            "checkpoint expects inputs {:?} with {} classes but {} holds {} data",
            ck.net.spec.input,
            ck.net.classes(),
            src.data.display(),
            kind.name()
        );
    }
    if src.batch_size == 0 {
        bail!("--batch-size must be positive");
    }
    let test = limit(load_split(kind, &src.data, false)?, src.limit)?;
    let rng = Rng::new(ck.seed);
    Ok(Loaded { ck, test, rng })
}

fn check_timesteps(cap: Option<usize>, full: usize) -> anyhow::Result<usize> {
    match cap {
        Some(0) => bail!("--timesteps must be at least 1"),
        Some(n) if n > full => bail!("--timesteps {n} exceeds the trained horizon of {full}"),
        Some(n) => Ok(n),
        None => Ok(full),
    }
}

fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let settings = format!(
        "eval.early_exit_tau = {}\neval.exit_rule = {:?}\neval.timesteps = {}\n",
        a.early_exit_tau.map_or_else(|| "none".into(), |t| t.to_string()),
        a.exit_rule,
        a.timesteps.map_or_else(|| "all".into(), |t| t.to_string())
    );
    let Loaded { ck, test, rng } = open(&a.source, "eval", &settings, a.out.as_deref())?;
    let net = &ck.net;
    let cap = check_timesteps(a.timesteps, net.timesteps())?;
    let opts = |t: usize| EvalOptions {
        timesteps: Some(t),
        ..EvalOptions::new(a.source.batch_size)
    };
    let Some(tau) = a.early_exit_tau else {
        let run = evaluate_parallel(net, &test, &opts(cap), &rng, Perturbation::None)?;
        println!("accuracy: {}", run.report.accuracy());
        println!("timesteps: {cap}");
        return Ok(());
    };
    let rule = match a.exit_rule {
        ExitRuleArg::LastAbove => ExitRule::LastAbove,
        ExitRuleArg::FirstAllBelow => ExitRule::FirstAllBelow,
    };
    let policy = compute_exit_time(net, tau, rule)?;
    let used = policy.t_exit.min(cap);
    let full = evaluate_parallel(net, &test, &opts(cap), &rng, Perturbation::None)?;
    let exit = if used == cap {
        full.clone()
    } else {
        evaluate_parallel(net, &test, &opts(used), &rng, Perturbation::None)?
    };
    println!("accuracy: {}", exit.report.accuracy());
    println!("timesteps: {used}");
    println!("t_exit: {}", policy.t_exit);
    println!("accuracy_full: {}", full.report.accuracy());
    if let Some(out) = &a.out {
        report::write_exit(
            &out.join(report::EXIT_TXT),
            &policy,
            full.report.accuracy(),
            exit.report.accuracy(),
        )?;
    }
    Ok(())
}

fn energy(a: &EnergyArgs) -> anyhow::Result<()> {
    let settings = format!(
        "energy.timesteps = {}\n",
        a.timesteps.map_or_else(|| "all".into(), |t| t.to_string())
    );
    let Loaded { ck, test, rng } = open(&a.source, "energy", &settings, Some(&a.out))?;
    let net = &ck.net;
    let steps = check_timesteps(a.timesteps, net.timesteps())?;
    let opts = EvalOptions {
        timesteps: Some(steps),
        ..EvalOptions::new(a.source.batch_size)
    };
    let run = evaluate_parallel(net, &test, &opts, &rng, Perturbation::None)?;
    let e = energy_report(&net.spec, &run.stats, &EnergyTable::default(), RateAttribution::Input)?;
    report::write_spikes(&a.out.join(report::SPIKES_CSV), net, &run.stats)?;
    report::write_energy(
        &a.out.join(report::ENERGY_TXT),
        net,
        &run.stats,
        &e,
        run.report.accuracy(),
    )?;
    println!("accuracy: {}", run.report.accuracy());
    println!("e_ann_pj: {}", e.e_ann);
    println!("e_snn_pj: {}", e.e_snn);
    println!("e_ann_over_e_snn: {}", e.ratio);
    Ok(())
}

fn sweep(
    src: &Source,
    command: &str,
    settings: &str,
    out: &Path,
    values: &[f64],
    make: impl Fn(f64) -> Perturbation,
) -> anyhow::Result<Vec<RobustnessPoint>> {
    let Loaded { ck, test, rng } = open(src, command, settings, Some(out))?;
    let opts = EvalOptions::new(src.batch_size);
    values
        .iter()
        .map(|&v| {
            let run = evaluate_parallel(&ck.net, &test, &opts, &rng, make(v))
                .with_context(|| format!("evaluating at strength {v}"))?;
            println!("{v}: {}", run.report.accuracy());
            Ok(RobustnessPoint {
                strength: v,
                accuracy: run.report.accuracy(),
            })
        })
        .collect()
}

fn list(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn noise(a: &NoiseArgs) -> anyhow::Result<()> {
    let settings = format!("noise.sigmas = {}\n", list(&a.sigmas));
    let points = sweep(&a.source, "noise", &settings, &a.out, &a.sigmas, |sigma| {
        Perturbation::Gaussian { sigma }
    })?;
    report::write_curve(&a.out.join(report::NOISE_CSV), "sigma", &points)?;
    Ok(())
}

fn attack(a: &AttackArgs) -> anyhow::Result<()> {
    let settings = format!("attack.eps = {}\n", list(&a.eps));
    let points = sweep(&a.source, "attack", &settings, &a.out, &a.eps, |eps| {
        Perturbation::Fgsm { eps }
    })?;
    report::write_curve(&a.out.join(report::FGSM_CSV), "eps", &points)?;
    Ok(())
}
