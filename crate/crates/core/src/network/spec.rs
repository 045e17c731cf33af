use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::conv_output_extent;
use crate::{Error, Result};

/// Normalization placed between a weighted sum and the neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    /// Separate scale and statistics per timestep.
    Bntt,
    /// One scale and one set of statistics shared by all timesteps.
    SharedBn,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Linear {
        out_features: usize,
    },
    /// 2×2 average pooling, stride 2. Stateless; never spikes.
    AvgPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub norm: Norm,
    pub is_output: bool,
}

impl LayerSpec {
    pub fn conv(out_channels: usize, norm: Norm) -> Self {
        LayerSpec {
            kind: LayerKind::Conv {
                out_channels,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            norm,
            is_output: false,
        }
    }

    pub fn linear(out_features: usize, norm: Norm) -> Self {
        LayerSpec {
            kind: LayerKind::Linear { out_features },
            norm,
            is_output: false,
        }
    }

    pub fn output(out_features: usize, norm: Norm) -> Self {
        LayerSpec {
            is_output: true,
            ..Self::linear(out_features, norm)
        }
    }

    pub fn avgpool() -> Self {
        LayerSpec {
            kind: LayerKind::AvgPool,
            norm: Norm::None,
            is_output: false,
        }
    }

    pub fn has_weight(&self) -> bool {
        !matches!(self.kind, LayerKind::AvgPool)
    }

    /// Hidden weight layers end in LIF neurons; the output layer integrates without spiking.
    pub fn spikes(&self) -> bool {
        self.has_weight() && !self.is_output
    }
}

/// Architecture: input shape `[C, H, W]` and the ordered layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// A layer with its shapes worked out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedLayer {
    pub spec: LayerSpec,
    /// Per-sample input shape (`[C, H, W]` or `[F]`).
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub weight_shape: Option<Vec<usize>>,
    /// Channels normalized (conv) or features (linear).
    pub channels: usize,
}

impl ResolvedLayer {
    pub fn fan_in(&self) -> usize {
        self.weight_shape.as_ref().map(|s| s[1..].iter().product()).unwrap_or(0)
    }

    pub fn neurons(&self) -> usize {
        self.out_shape.iter().product()
    }
}

impl NetSpec {
    /// Fully connected network; `norm` applies to every weighted layer,
    /// including the output accumulator.
    pub fn mlp(input: [usize; 3], hidden: &[usize], classes: usize, norm: Norm) -> Self {
        let mut layers: Vec<_> = hidden.iter().map(|&h| LayerSpec::linear(h, norm)).collect();
        layers.push(LayerSpec::output(classes, norm));
        NetSpec { input, layers }
    }

    /// conv → pool → conv → pool → linear output.
    pub fn small_conv(input: [usize; 3], channels: [usize; 2], classes: usize, norm: Norm) -> Self {
        NetSpec {
            input,
            layers: vec![
                LayerSpec::conv(channels[0], norm),
                LayerSpec::avgpool(),
                LayerSpec::conv(channels[1], norm),
                LayerSpec::avgpool(),
                LayerSpec::output(classes, norm),
            ],
        }
    }

    /// Seven 3×3 convolutions (64, 64, pool, 128, 128, pool, 256 ×3, pool),
    /// a 1024-unit linear layer and the linear classifier.
    pub fn vgg9(input: [usize; 3], classes: usize, norm: Norm) -> Self {
        let c = |n| LayerSpec::conv(n, norm);
        let p = LayerSpec::avgpool;
        NetSpec {
            input,
            layers: vec![
                c(64),
                c(64),
                p(),
                c(128),
                c(128),
                p(),
                c(256),
                c(256),
                c(256),
                p(),
                LayerSpec::linear(1024, norm),
                LayerSpec::output(classes, norm),
            ],
        }
    }

    pub fn classes(&self) -> usize {
        match self.layers.last().map(|l| l.kind) {
            Some(LayerKind::Linear { out_features }) => out_features,
            Some(LayerKind::Conv { out_channels, .. }) => out_channels,
            _ => 0,
        }
    }

    /// Checks structural rules and computes every layer's shapes.
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        let op = "net_spec";
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::invalid(op, "input extents must be positive"));
        }
        let outputs = self.layers.iter().filter(|l| l.is_output).count();
        match self.layers.last() {
            Some(last) if last.is_output && outputs == 1 => {}
            _ => {
                return Err(Error::invalid(
                    op,
                    "exactly one output layer is required and it must be last",
                ))
            }
        }
        let mut shape = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let in_shape = shape.clone();
            let (out_shape, weight_shape, channels) = match layer.kind {
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    let [c, h, w] = match shape[..] {
                        [c, h, w] => [c, h, w],
                        _ => {
                            return Err(Error::invalid(
                                op,
                                format!("layer {i}: convolution needs a [C, H, W] input"),
                            ))
                        }
                    };
                    if out_channels == 0 {
                        return Err(Error::invalid(op, format!("layer {i}: no output channels")));
                    }
                    let oh = conv_output_extent(h, kernel, stride, pad)?;
                    let ow = conv_output_extent(w, kernel, stride, pad)?;
                    (
                        vec![out_channels, oh, ow],
                        Some(vec![out_channels, c, kernel, kernel]),
                        out_channels,
                    )
                }
                LayerKind::Linear { out_features } => {
                    if out_features == 0 {
                        return Err(Error::invalid(op, format!("layer {i}: no output features")));
                    }
                    let fan_in = shape.iter().product();
                    (vec![out_features], Some(vec![out_features, fan_in]), out_features)
                }
                LayerKind::AvgPool => {
                    if layer.is_output || layer.norm != Norm::None {
                        return Err(Error::invalid(
                            op,
                            format!("layer {i}: pooling carries no output role or normalization"),
                        ));
                    }
                    match shape[..] {
                        [c, h, w] if h % 2 == 0 && w % 2 == 0 => (vec![c, h / 2, w / 2], None, c),
                        _ => {
                            return Err(Error::invalid(
                                op,
                                format!("layer {i}: pooling needs even spatial extents"),
                            ))
                        }
                    }
                }
            };
            shape = out_shape.clone();
            out.push(ResolvedLayer {
                spec: *layer,
                in_shape,
                out_shape,
                weight_shape,
                channels,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg9_shapes() {
        let r = NetSpec::vgg9([3, 32, 32], 10, Norm::Bntt).resolve().unwrap();
        assert_eq!(r.len(), 12);
        assert_eq!(r[9].out_shape, vec![256, 4, 4]);
        assert_eq!(r[10].weight_shape, Some(vec![1024, 4096]));
        assert_eq!(r[11].out_shape, vec![10]);
    }

    #[test]
    fn small_conv_shapes() {
        let r = NetSpec::small_conv([1, 28, 28], [8, 16], 10, Norm::Bntt)
            .resolve()
            .unwrap();
        assert_eq!(r[4].in_shape, vec![16, 7, 7]);
        assert_eq!(r[4].fan_in(), 784);
        assert_eq!(r[0].fan_in(), 9);
    }

    #[test]
    fn structural_errors() {
        let mut s = NetSpec::mlp([1, 4, 4], &[8], 3, Norm::Bntt);
        s.layers[0].is_output = true;
        assert!(s.resolve().is_err());
        let s = NetSpec {
            input: [1, 4, 4],
            layers: vec![LayerSpec::linear(3, Norm::None)],
        };
        assert!(s.resolve().is_err());
        let s = NetSpec {
            input: [1, 3, 3],
            layers: vec![LayerSpec::avgpool(), LayerSpec::output(2, Norm::None)],
        };
        assert!(s.resolve().is_err());
        let s = NetSpec {
            input: [4, 1, 1],
            layers: vec![
                LayerSpec::linear(3, Norm::None),
                LayerSpec::conv(2, Norm::None),
                LayerSpec::output(2, Norm::None),
            ],
        };
        assert!(s.resolve().is_err());
    }
}
