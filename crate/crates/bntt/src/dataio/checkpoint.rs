//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `BNTTCKPT` |
//! | 4 | format version |
//! | 8 | manifest length `n` |
//! | n | UTF-8 JSON manifest |
//! | … | `f32` arrays in manifest order |
//! | 4 | CRC-32 of everything before it |

use std::path::Path;

use bntt_core::bntt::BnttLayer;
use bntt_core::network::{LayerKind, LayerParams, LayerSpec, ModelConfig, NetSpec, NetworkState, Norm, SpikeMode};
use bntt_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const MAGIC: &[u8; 8] = b"BNTTCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// A trained (or initial) network with the progress that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: NetworkState<f32>,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub iteration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerRepr {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        norm: NormRepr,
    },
    Linear {
        out_features: usize,
        norm: NormRepr,
        output: bool,
    },
    AvgPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NormRepr {
    Bntt,
    SharedBn,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchRepr {
    input: [usize; 3],
    layers: Vec<LayerRepr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    timesteps: usize,
    threshold: f64,
    leak: f64,
    surrogate_alpha: f64,
    epsilon: f64,
    ema_rho: f64,
    delayed_input: bool,
    smooth_spikes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayRepr {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    architecture: ArchRepr,
    model: ModelRepr,
    seed: u64,
    epoch: usize,
    iteration: u64,
    /// Running-statistics slots filled by training, per normalized layer.
    populated: Vec<Option<Vec<bool>>>,
    arrays: Vec<ArrayRepr>,
}

impl From<Norm> for NormRepr {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Bntt => NormRepr::Bntt,
            Norm::SharedBn => NormRepr::SharedBn,
            Norm::None => NormRepr::None,
        }
    }
}

impl From<NormRepr> for Norm {
    fn from(n: NormRepr) -> Self {
        match n {
            NormRepr::Bntt => Norm::Bntt,
            NormRepr::SharedBn => Norm::SharedBn,
            NormRepr::None => Norm::None,
        }
    }
}

impl From<&NetSpec> for ArchRepr {
    fn from(spec: &NetSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => LayerRepr::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    norm: l.norm.into(),
                },
                LayerKind::Linear { out_features } => LayerRepr::Linear {
                    out_features,
                    norm: l.norm.into(),
                    output: l.is_output,
                },
                LayerKind::AvgPool => LayerRepr::AvgPool,
            })
            .collect();
        ArchRepr {
            input: spec.input,
            layers,
        }
    }
}

impl From<&ArchRepr> for NetSpec {
    fn from(a: &ArchRepr) -> Self {
        let layers = a
            .layers
            .iter()
            .map(|l| match *l {
                LayerRepr::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    norm,
                } => LayerSpec {
                    kind: LayerKind::Conv {
                        out_channels,
                        kernel,
                        stride,
                        pad,
                    },
                    norm: norm.into(),
                    is_output: false,
                },
                LayerRepr::Linear {
                    out_features,
                    norm,
                    output,
                } => LayerSpec {
                    kind: LayerKind::Linear { out_features },
                    norm: norm.into(),
                    is_output: output,
                },
                LayerRepr::AvgPool => LayerSpec::avgpool(),
            })
            .collect();
        NetSpec { input: a.input, layers }
    }
}

impl From<&ModelConfig> for ModelRepr {
    fn from(m: &ModelConfig) -> Self {
        ModelRepr {
            timesteps: m.timesteps,
            threshold: m.theta,
            leak: m.lambda,
            surrogate_alpha: m.alpha,
            epsilon: m.epsilon,
            ema_rho: m.ema_rho,
            delayed_input: m.delayed_layer_input,
            smooth_spikes: m.spike_mode == SpikeMode::Smooth,
        }
    }
}

impl From<&ModelRepr> for ModelConfig {
    fn from(m: &ModelRepr) -> Self {
        ModelConfig {
            timesteps: m.timesteps,
            theta: m.threshold,
            lambda: m.leak,
            alpha: m.surrogate_alpha,
            epsilon: m.epsilon,
            ema_rho: m.ema_rho,
            delayed_layer_input: m.delayed_input,
            spike_mode: if m.smooth_spikes {
                SpikeMode::Smooth
            } else {
                SpikeMode::Heaviside
            },
        }
    }
}

fn corrupt(reason: impl Into<String>) -> DataError {
    DataError::format("checkpoint", reason)
}

/// Arrays of one layer in storage order.
fn layer_arrays(l: usize, p: &LayerParams<f32>) -> Vec<(String, &Tensor<f32>)> {
    let bn = p.norm.as_ref();
    [
        ("weight", p.weight.as_ref()),
        ("weight_velocity", p.weight_velocity.as_ref()),
        ("gamma", bn.map(|b| &b.gamma)),
        ("running_mean", bn.map(|b| &b.running_mean)),
        ("running_var", bn.map(|b| &b.running_var)),
        ("gamma_velocity", p.gamma_velocity.as_ref()),
    ]
    .into_iter()
    .filter_map(|(name, t)| t.map(|t| (format!("layer{l}.{name}"), t)))
    .collect()
}

/// Serializes a checkpoint to bytes.
pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let net = &ck.net;
    let arrays: Vec<(String, &Tensor<f32>)> = net
        .layers
        .iter()
        .enumerate()
        .flat_map(|(l, p)| layer_arrays(l, p))
        .collect();
    if let Some((name, _)) = arrays.iter().find(|(_, t)| !t.all_finite()) {
        return Err(DataError::Mismatch(format!(
            "refusing to store non-finite values in {name}"
        )));
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        architecture: (&net.spec).into(),
        model: (&net.model).into(),
        seed: ck.seed,
        epoch: ck.epoch,
        iteration: ck.iteration,
        populated: net
            .layers
            .iter()
            .map(|p| p.norm.as_ref().map(|b| b.populated_slots().to_vec()))
            .collect(),
        arrays: arrays
            .iter()
            .map(|(name, t)| ArrayRepr {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| corrupt(e.to_string()))?;
    let floats: usize = arrays.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(24 + json.len() + 4 * floats + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &arrays {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses checkpoint bytes. With `expected` set, the stored architecture must equal it.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&NetSpec>) -> Result<Checkpoint> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(corrupt("checksum mismatch"));
    }
    let len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes"));
    let json_end = usize::try_from(len)
        .ok()
        .and_then(|n| n.checked_add(20))
        .filter(|&end| end <= body.len())
        .ok_or_else(|| corrupt(format!("manifest length {len} exceeds the file")))?;
    let manifest: Manifest =
        serde_json::from_slice(&body[20..json_end]).map_err(|e| corrupt(format!("manifest: {e}")))?;
    if manifest.format_version != version {
        return Err(corrupt("manifest and header disagree on the format version"));
    }
    let spec = NetSpec::from(&manifest.architecture);
    if let Some(want) = expected {
        if *want != spec {
            return Err(DataError::Mismatch(
                "checkpoint architecture differs from the configured one".into(),
            ));
        }
    }
    let model = ModelConfig::from(&manifest.model);
    let mut payload = &body[json_end..];
    let mut take = |a: &ArrayRepr| -> Result<Tensor<f32>> {
        let n = a
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= payload.len()))
            .ok_or_else(|| corrupt(format!("array {} of shape {:?} overruns the payload", a.name, a.shape)))?;
        let (head, rest) = payload.split_at(4 * n);
        payload = rest;
        let data: Vec<f32> = head
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("array {} holds non-finite values", a.name)));
        }
        Ok(Tensor::from_vec(&a.shape, data)?)
    };

    let resolved = spec.resolve()?;
    if manifest.populated.len() != resolved.len() {
        return Err(corrupt("per-layer records do not match the architecture"));
    }
    let mut entries = manifest.arrays.iter();
    let mut next = |l: usize, name: &str| -> Result<Tensor<f32>> {
        let want = format!("layer{l}.{name}");
        match entries.next() {
            Some(a) if a.name == want => take(a),
            Some(a) => Err(corrupt(format!("expected array {want}, found {}", a.name))),
            None => Err(corrupt(format!("array {want} is missing"))),
        }
    };
    let mut layers = Vec::with_capacity(resolved.len());
    for (l, (r, populated)) in resolved.iter().zip(&manifest.populated).enumerate() {
        let (weight, weight_velocity) = if r.weight_shape.is_some() {
            (Some(next(l, "weight")?), Some(next(l, "weight_velocity")?))
        } else {
            (None, None)
        };
        let (norm, gamma_velocity) = match (r.spec.norm, populated) {
            (Norm::None, None) => (None, None),
            (Norm::None, Some(_)) | (_, None) => {
                return Err(corrupt(format!("layer {l}: normalization records do not match")))
            }
            (kind, Some(flags)) => {
                let mut bn = if kind == Norm::SharedBn {
                    BnttLayer::time_shared(model.timesteps, r.channels, model.epsilon, model.ema_rho)?
                } else {
                    BnttLayer::new(model.timesteps, r.channels, model.epsilon, model.ema_rho)?
                };
                bn.gamma = next(l, "gamma")?;
                bn.running_mean = next(l, "running_mean")?;
                bn.running_var = next(l, "running_var")?;
                let slots = [bn.slots(), r.channels];
                if bn.gamma.shape() != slots || bn.running_mean.shape() != slots || bn.running_var.shape() != slots {
                    return Err(corrupt(format!("layer {l}: normalization arrays have the wrong shape")));
                }
                bn.mark_populated(flags)?;
                (Some(bn), Some(next(l, "gamma_velocity")?))
            }
        };
        layers.push(LayerParams {
            weight,
            norm,
            weight_velocity,
            gamma_velocity,
        });
    }
    if entries.next().is_some() {
        return Err(corrupt("manifest lists arrays the architecture has no place for"));
    }
    if !payload.is_empty() {
        return Err(corrupt(format!("{} unread payload bytes", payload.len())));
    }
    Ok(Checkpoint {
        net: NetworkState::from_parts(&spec, model, layers)?,
        seed: manifest.seed,
        epoch: manifest.epoch,
        iteration: manifest.iteration,
    })
}

/// Writes atomically: the bytes go to a sibling temporary file that is then renamed.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| DataError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&NetSpec>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_checkpoint(&bytes, expected).map_err(|e| match e {
        DataError::Format { reason, .. } => DataError::format(path.display().to_string(), reason),
        other => other,
    })
}
