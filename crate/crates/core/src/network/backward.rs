use alloc::vec;
use alloc::vec::Vec;

use super::forward::{reads_delayed, Tape};
use super::spec::LayerKind;
use super::state::{Gradients, NetworkState};
use crate::bntt::bntt_backward;
use crate::numerics::{avgpool2_backward, conv2d_backward_parts, linear_backward_parts, Real, Tensor};
use crate::{Error, Result};

fn add_into<S: Real>(slot: &mut Option<Tensor<S>>, g: Tensor<S>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Backpropagation through time.
///
/// `output_grad` is `∂L/∂u` of the output layer's final potential. Because that
/// potential is the sum of the layer's normalized input over all timesteps,
/// the same gradient enters the output layer at every timestep. Hidden layers
/// route gradients through the surrogate derivative and carry `λ·∂L/∂u` back
/// to the previous timestep; the reset subtraction passes no gradient.
///
/// With `want_input_grad` the gradient with respect to the encoder output is
/// also returned, averaged over timesteps.
pub fn backward_bptt<S: Real>(
    net: &NetworkState<S>,
    tape: &Tape<S>,
    output_grad: &Tensor<S>,
    want_input_grad: bool,
) -> Result<(Gradients<S>, Option<Tensor<S>>)> {
    let op = "backward_bptt";
    let resolved = net.resolved();
    let nl = resolved.len();
    let m = tape.batch;
    if output_grad.shape() != [m, net.classes()] {
        return Err(Error::shape(op, &[m, net.classes()], output_grad.shape()));
    }
    if tape.steps.is_empty() || tape.steps.iter().any(|s| s.len() != nl) {
        return Err(Error::invalid(op, "tape does not belong to this network"));
    }
    let lambda = S::cast(net.model.lambda);

    let mut grad_w: Vec<Option<Vec<f64>>> = net
        .layers
        .iter()
        .map(|p| p.weight.as_ref().map(|w| vec![0.0; w.len()]))
        .collect();
    let mut grad_g: Vec<Option<Vec<f64>>> = net
        .layers
        .iter()
        .map(|p| p.norm.as_ref().map(|n| vec![0.0; n.gamma.len()]))
        .collect();
    let mut carry: Vec<Option<Vec<S>>> = vec![None; nl];
    let mut pending: Vec<Option<Tensor<S>>> = vec![None; nl];
    let mut input_grad: Option<Vec<f64>> = None;

    for t in (0..tape.steps.len()).rev() {
        let mut incoming = core::mem::replace(&mut pending, vec![None; nl]);
        for l in (0..nl).rev() {
            let rec = &tape.steps[t][l];
            let r = &resolved[l];
            let g_out = if r.spec.is_output {
                Some(output_grad.clone())
            } else {
                incoming[l].take()
            };

            let g_y = if r.spec.spikes() {
                let sg = rec
                    .surrogate
                    .as_ref()
                    .ok_or_else(|| Error::invalid(op, "tape lacks surrogate values"))?;
                let c = carry[l].get_or_insert_with(|| vec![S::ZERO; sg.len()]);
                let mut g = vec![S::ZERO; sg.len()];
                match &g_out {
                    Some(go) => {
                        for (((g, c), &s), &o) in g.iter_mut().zip(c.iter_mut()).zip(sg.data()).zip(go.data()) {
                            *g = o * s + *c;
                            *c = lambda * *g;
                        }
                    }
                    None => {
                        for (g, c) in g.iter_mut().zip(c.iter_mut()) {
                            *g = *c;
                            *c = lambda * *g;
                        }
                    }
                }
                Tensor::from_vec(sg.shape(), g)?
            } else {
                match g_out {
                    Some(g) => g,
                    None => continue,
                }
            };

            let need_input = l > 0 || want_input_grad;
            let g_in = match r.spec.kind {
                LayerKind::AvgPool => Some(avgpool2_backward(&g_y, &rec.in_shape)?),
                kind => {
                    let params = &net.layers[l];
                    let g_z = match (&rec.norm, &params.norm) {
                        (Some(cache), Some(bn)) => {
                            let (gx, gg) = bntt_backward(cache, &g_y)?;
                            let slot = bn.slot(t)?;
                            let acc = grad_g[l].as_mut().expect("normalized layer");
                            let c = bn.channels();
                            for (a, v) in acc[slot * c..(slot + 1) * c].iter_mut().zip(gg) {
                                *a += v;
                            }
                            gx
                        }
                        (None, None) => g_y,
                        _ => return Err(Error::invalid(op, "tape lacks normalization caches")),
                    };
                    let input = rec
                        .input
                        .as_ref()
                        .ok_or_else(|| Error::invalid(op, "tape lacks layer inputs"))?;
                    let w = params.weight.as_ref().expect("weight layers carry weights");
                    let (gi, gw) = match kind {
                        LayerKind::Conv { stride, pad, .. } => {
                            conv2d_backward_parts(&g_z, input, w, stride, pad, need_input)?
                        }
                        _ => linear_backward_parts(&g_z, input, w, need_input)?,
                    };
                    for (a, v) in grad_w[l].as_mut().expect("weight layer").iter_mut().zip(gw.data()) {
                        *a += v.widen();
                    }
                    gi
                }
            };

            let Some(g_in) = g_in else { continue };
            if l == 0 {
                if want_input_grad {
                    let acc = input_grad.get_or_insert_with(|| vec![0.0; g_in.len()]);
                    for (a, v) in acc.iter_mut().zip(g_in.data()) {
                        *a += v.widen();
                    }
                }
            } else if reads_delayed(net, l) {
                if t > 0 {
                    add_into(&mut pending[l - 1], g_in)?;
                }
            } else {
                add_into(&mut incoming[l - 1], g_in)?;
            }
        }
    }

    let round = |v: Vec<f64>, shape: &[usize]| Tensor::from_vec(shape, v.into_iter().map(S::cast).collect());
    let mut grads = Gradients {
        weight: Vec::with_capacity(nl),
        gamma: Vec::with_capacity(nl),
    };
    for (l, p) in net.layers.iter().enumerate() {
        grads.weight.push(match (grad_w[l].take(), &p.weight) {
            (Some(g), Some(w)) => Some(round(g, w.shape())?),
            _ => None,
        });
        grads.gamma.push(match (grad_g[l].take(), &p.norm) {
            (Some(g), Some(n)) => Some(round(g, n.gamma.shape())?),
            _ => None,
        });
    }
    let steps = tape.steps.len() as f64;
    let input_grad = match input_grad {
        Some(g) => {
            let mut shape = vec![m];
            shape.extend_from_slice(&net.spec.input);
            Some(Tensor::from_vec(
                &shape,
                g.into_iter().map(|v| S::cast(v / steps)).collect(),
            )?)
        }
        None if want_input_grad => {
            let mut shape = vec![m];
            shape.extend_from_slice(&net.spec.input);
            Some(Tensor::zeros(&shape))
        }
        None => None,
    };
    Ok((grads, input_grad))
}
