//! Plain-text run configuration.
//!
//! One `section.key = value` assignment per line. `#` starts a comment, blank
//! lines are ignored, keys may appear at most once and unknown keys are
//! rejected. Lists are comma separated. Every key has a default, so an empty
//! file is a complete configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use bntt_core::network::{ModelConfig, NetSpec, Norm, SgdConfig, TrainConfig};

use super::DatasetKind;
use crate::error::{DataError, Result};

/// Network family built by [`RunConfig::net_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Mlp,
    SmallConv,
    Vgg9,
}

impl Arch {
    fn name(self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::SmallConv => "small_conv",
            Arch::Vgg9 => "vgg9",
        }
    }
}

/// Everything a training run needs besides the data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` detects the dataset from the data directory.
    pub dataset: Option<DatasetKind>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub arch: Arch,
    pub hidden: Vec<usize>,
    pub channels: [usize; 2],
    pub norm: Norm,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// `None` augments CIFAR-10 only.
    pub augment: Option<bool>,
    /// Write a checkpoint every this many epochs (0: final checkpoint only).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            train_limit: None,
            test_limit: None,
            arch: Arch::Vgg9,
            hidden: vec![256],
            channels: [16, 32],
            norm: Norm::Bntt,
            model: ModelConfig::default(),
            train: TrainConfig {
                epochs: 120,
                sgd: SgdConfig::default(),
                ..TrainConfig::default()
            },
            augment: None,
            checkpoint_every: 10,
        }
    }
}

fn norm_name(n: Norm) -> &'static str {
    match n {
        Norm::Bntt => "bntt",
        Norm::SharedBn => "shared_bn",
        Norm::None => "none",
    }
}

struct Line<'a> {
    origin: &'a str,
    number: usize,
    key: &'a str,
    value: &'a str,
}

impl Line<'_> {
    fn err(&self, reason: impl Into<String>) -> DataError {
        DataError::Config {
            origin: self.origin.to_owned(),
            line: self.number,
            reason: reason.into(),
        }
    }

    fn scalar<T: FromStr>(&self, kind: &str) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("`{}` expects {kind}, got `{}`", self.key, self.value)))
    }

    fn positive(&self) -> Result<usize> {
        match self.scalar::<usize>("a positive integer")? {
            0 => Err(self.err(format!("`{}` must be positive", self.key))),
            n => Ok(n),
        }
    }

    fn list(&self) -> Result<Vec<usize>> {
        self.value
            .split(',')
            .map(|s| match s.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(self.err(format!(
                    "`{}` expects a comma-separated list of positive integers, got `{}`",
                    self.key, self.value
                ))),
            })
            .collect()
    }

    fn choice<T>(&self, options: &[(&str, T)]) -> Result<T>
    where
        T: Copy,
    {
        options
            .iter()
            .find(|(n, _)| *n == self.value)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(format!(
                    "`{}` must be one of {}, got `{}`",
                    self.key,
                    names.join(", "),
                    self.value
                ))
            })
    }
}

impl RunConfig {
    /// Parses configuration text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let number = i + 1;
            let syntax = |reason: String| DataError::Config {
                origin: origin.to_owned(),
                line: number,
                reason,
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `section.key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
                return Err(syntax(format!("key `{key}` is not of the form `section.key`")));
            }
            if value.is_empty() {
                return Err(syntax(format!("`{key}` has no value")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(syntax(format!("`{key}` is set twice")));
            }
            seen.push(key.to_owned());
            cfg.apply(&Line {
                origin,
                number,
                key,
                value,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn apply(&mut self, l: &Line) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match l.key {
            "data.dataset" => {
                self.dataset = l.choice(&[
                    ("auto", None),
                    ("mnist", Some(DatasetKind::Mnist)),
                    ("cifar10", Some(DatasetKind::Cifar10)),
                ])?
            }
            "data.train_limit" => self.train_limit = Some(l.positive()?),
            "data.test_limit" => self.test_limit = Some(l.positive()?),
            "model.arch" => {
                self.arch = l.choice(&[
                    ("mlp", Arch::Mlp),
                    ("small_conv", Arch::SmallConv),
                    ("vgg9", Arch::Vgg9),
                ])?
            }
            "model.hidden" => self.hidden = l.list()?,
            "model.channels" => match l.list()?[..] {
                [a, b] => self.channels = [a, b],
                _ => return Err(l.err("`model.channels` expects exactly two values")),
            },
            "model.norm" => {
                self.norm = l.choice(&[
                    ("bntt", Norm::Bntt),
                    ("shared_bn", Norm::SharedBn),
                    ("none", Norm::None),
                ])?
            }
            "model.threshold" => m.theta = l.scalar("a number")?,
            "model.leak" => m.lambda = l.scalar("a number")?,
            "model.surrogate_alpha" => m.alpha = l.scalar("a number")?,
            "model.epsilon" => m.epsilon = l.scalar("a number")?,
            "model.ema_rho" => m.ema_rho = l.scalar("a number")?,
            "model.delayed_input" => m.delayed_layer_input = l.scalar("true or false")?,
            "train.timesteps" => m.timesteps = l.positive()?,
            "train.batch_size" => t.batch_size = l.positive()?,
            "train.eval_batch_size" => t.eval_batch_size = l.positive()?,
            "train.epochs" => t.epochs = l.positive()?,
            "train.lr" => t.base_lr = l.scalar("a number")?,
            "train.momentum" => t.sgd.momentum = l.scalar("a number")?,
            "train.weight_decay" => t.sgd.weight_decay = l.scalar("a number")?,
            "train.seed" => t.seed = l.scalar("a non-negative integer")?,
            "train.augment" => self.augment = Some(l.scalar("true or false")?),
            "train.checkpoint_every" => self.checkpoint_every = l.scalar("a non-negative integer")?,
            other => return Err(l.err(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical text with every key, in the grammar accepted by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("data.dataset", self.dataset.map_or("auto", DatasetKind::name).into());
        if let Some(n) = self.train_limit {
            kv("data.train_limit", n.to_string());
        }
        if let Some(n) = self.test_limit {
            kv("data.test_limit", n.to_string());
        }
        kv("model.arch", self.arch.name().into());
        kv("model.hidden", join(&self.hidden));
        kv("model.channels", join(&self.channels));
        kv("model.norm", norm_name(self.norm).into());
        kv("model.threshold", format!("{:?}", m.theta));
        kv("model.leak", format!("{:?}", m.lambda));
        kv("model.surrogate_alpha", format!("{:?}", m.alpha));
        kv("model.epsilon", format!("{:?}", m.epsilon));
        kv("model.ema_rho", format!("{:?}", m.ema_rho));
        kv("model.delayed_input", m.delayed_layer_input.to_string());
        kv("train.timesteps", m.timesteps.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.eval_batch_size", t.eval_batch_size.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv("train.lr", format!("{:?}", t.base_lr));
        kv("train.momentum", format!("{:?}", t.sgd.momentum));
        kv("train.weight_decay", format!("{:?}", t.sgd.weight_decay));
        kv("train.seed", t.seed.to_string());
        if let Some(a) = self.augment {
            kv("train.augment", a.to_string());
        }
        kv("train.checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    /// Architecture for a dataset of the given kind.
    pub fn net_spec(&self, kind: DatasetKind) -> NetSpec {
        let (input, classes) = (kind.input(), kind.classes());
        match self.arch {
            Arch::Mlp => NetSpec::mlp(input, &self.hidden, classes, self.norm),
            Arch::SmallConv => NetSpec::small_conv(input, self.channels, classes, self.norm),
            Arch::Vgg9 => NetSpec::vgg9(input, classes, self.norm),
        }
    }

    /// Training settings with augmentation resolved for `kind`.
    pub fn train_config(&self, kind: DatasetKind) -> TrainConfig {
        TrainConfig {
            augment: self.augment.unwrap_or(kind == DatasetKind::Cifar10),
            ..self.train
        }
    }

    /// Checks value ranges that the grammar alone cannot.
    pub fn validate(&self, kind: DatasetKind) -> Result<()> {
        self.model.validate()?;
        self.train_config(kind).validate()?;
        self.net_spec(kind).resolve()?;
        Ok(())
    }
}
