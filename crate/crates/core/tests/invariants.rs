//! Randomized properties of the kernels, the neuron, the normalization layer,
//! the network and the analysis passes.

use bntt_core::analysis::{energy_report, threshold_equivalence_check, EnergyTable, RateAttribution, SpikeStats};
use bntt_core::bntt::{bntt_backward, BnttLayer};
use bntt_core::encoding::poisson_encode_batch;
use bntt_core::network::{
    forward_unrolled, loss_and_output_grad, ForwardOptions, ModelConfig, NetSpec, NetworkState, Norm,
};
use bntt_core::neuron::{lif_step, surrogate_grad, LifLayerState};
use bntt_core::numerics::{avgpool2, avgpool2_backward, conv2d, conv2d_backward, linear, linear_backward};
use bntt_core::{Rng, Stream, Tensor};
use proptest::prelude::*;
use rand::Rng as _;

fn uniform(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = Rng::new(seed).stream(Stream::Noise, &[shape.iter().product::<usize>() as u64]);
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_adjoint_identity(
        b in 1usize..3, cin in 1usize..4, cout in 1usize..4, h in 3usize..8, w in 3usize..8,
        k in prop::sample::select(vec![1usize, 3]), stride in 1usize..3, seed in any::<u64>(),
    ) {
        let pad = k / 2;
        let x = uniform(&[b, cin, h, w], seed, -1.0, 1.0);
        let kern = uniform(&[cout, cin, k, k], seed ^ 1, -1.0, 1.0);
        let y = conv2d(&x, &kern, stride, pad).unwrap();
        let g = uniform(y.shape(), seed ^ 2, -1.0, 1.0);
        let (gx, gk) = conv2d_backward(&g, &x, &kern, stride, pad).unwrap();
        // ⟨g, conv(x, K)⟩ is bilinear in x and K, so both adjoints reproduce it
        let lhs = g.dot(&y).unwrap();
        prop_assert!(close(lhs, gx.dot(&x).unwrap(), 1e-9));
        prop_assert!(close(lhs, gk.dot(&kern).unwrap(), 1e-9));
        prop_assert_eq!(conv2d(&x, &kern, stride, pad).unwrap(), y);
    }

    #[test]
    fn linear_adjoint_identity(b in 1usize..5, fin in 1usize..20, fout in 1usize..10, seed in any::<u64>()) {
        let x = uniform(&[b, fin], seed, -1.0, 1.0);
        let wt = uniform(&[fout, fin], seed ^ 1, -1.0, 1.0);
        let y = linear(&x, &wt).unwrap();
        let g = uniform(y.shape(), seed ^ 2, -1.0, 1.0);
        let (gx, gw) = linear_backward(&g, &x, &wt).unwrap();
        let lhs = g.dot(&y).unwrap();
        prop_assert!(close(lhs, gx.dot(&x).unwrap(), 1e-9));
        prop_assert!(close(lhs, gw.dot(&wt).unwrap(), 1e-9));
    }

    #[test]
    fn pool_adjoint_identity(b in 1usize..3, c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
        let x = uniform(&[b, c, 2 * h, 2 * w], seed, -1.0, 1.0);
        let y = avgpool2(&x).unwrap();
        let g = uniform(y.shape(), seed ^ 1, -1.0, 1.0);
        let gx = avgpool2_backward(&g, x.shape()).unwrap();
        prop_assert!(close(g.dot(&y).unwrap(), gx.dot(&x).unwrap(), 1e-12));
    }

    #[test]
    fn soft_reset_residue_is_exact(seed in any::<u64>(), lambda in 0.05f64..=1.0, theta in 0.1f64..2.0) {
        let mut state = LifLayerState::new(&[16], lambda, theta).unwrap();
        for t in 0..6 {
            let x = uniform(&[16], seed.wrapping_add(t), -1.0, 2.0);
            let (spikes, next) = lif_step(&state, &x).unwrap();
            for i in 0..16 {
                let fired = f64::from(spikes.bits()[i]);
                prop_assert_eq!(next.u.data()[i], lambda * state.u.data()[i] + x.data()[i] - theta * fired);
            }
            state = next;
        }
    }

    #[test]
    fn accumulator_is_running_sum(seed in any::<u64>(), steps in 1usize..10) {
        let mut state = LifLayerState::<f64>::accumulator(&[5]);
        let mut sum = [0.0; 5];
        for t in 0..steps {
            let x = uniform(&[5], seed.wrapping_add(t as u64), -3.0, 3.0);
            let (spikes, next) = lif_step(&state, &x).unwrap();
            prop_assert_eq!(spikes.count(), 0);
            for (s, v) in sum.iter_mut().zip(x.data()) {
                *s += v;
            }
            prop_assert_eq!(next.u.data(), &sum[..]);
            state = next;
        }
    }

    #[test]
    fn surrogate_is_nonnegative_bounded_symmetric(d in 0.0f64..4.0, theta in 0.1f64..3.0, alpha in 0.01f64..1.0) {
        let u = Tensor::from_vec(&[2], vec![theta + d, theta - d]).unwrap();
        let g = surrogate_grad(&u, theta, alpha).unwrap();
        let (a, b) = (g.data()[0], g.data()[1]);
        prop_assert!(a >= 0.0 && a <= alpha);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn normalization_moments_and_projections(
        m in 2usize..9, c in 1usize..5, spatial in 1usize..4, steps in 1usize..4, seed in any::<u64>(),
        shift in -3.0f64..3.0, scale in 0.2f64..3.0,
    ) {
        let mut layer = BnttLayer::<f64>::new(steps, c, 1e-5, 0.1).unwrap();
        layer.gamma = uniform(&[steps, c], seed, 0.2, 2.0);
        let step = steps - 1;
        let x = uniform(&[m, c, spatial, spatial], seed ^ 1, -1.0, 1.0).map(|v| scale * v + shift);
        let (y, cache, _, var) = layer.normalize_batch(&x, step).unwrap();
        let g = uniform(x.shape(), seed ^ 2, -1.0, 1.0);
        let (gx, _) = bntt_backward(&cache, &g).unwrap();
        let per = spatial * spatial;
        for ch in 0..c {
            let pick = |t: &Tensor<f64>| -> Vec<f64> {
                t.data().chunks_exact(per).enumerate().filter(|(i, _)| i % c == ch).flat_map(|(_, p)| p.to_vec()).collect()
            };
            let (yc, gc, hc) = (pick(&y), pick(&gx), pick(&cache.xhat));
            let n = yc.len() as f64;
            let mean = yc.iter().sum::<f64>() / n;
            let v = yc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            let gamma = layer.gamma.data()[step * c + ch];
            prop_assert!(mean.abs() <= 1e-6);
            prop_assert!((v - gamma * gamma * var[ch] / (var[ch] + layer.epsilon)).abs() <= 1e-5);
            prop_assert!(gc.iter().sum::<f64>().abs() <= 1e-6);
            // the variance direction is removed except for the share ε/(σ²+ε) the epsilon keeps
            let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };
            let den = var[ch] + layer.epsilon;
            let residue = gamma / den.sqrt() * dot(&pick(&g), &hc) * layer.epsilon / den;
            prop_assert!((dot(&gc, &hc) - residue).abs() <= 1e-6 * (1.0 + gamma / den.sqrt()));
        }
    }

    #[test]
    fn loss_is_shift_invariant(seed in any::<u64>(), shift in -50.0f64..50.0, m in 1usize..6) {
        let u = uniform(&[m, 4], seed, -5.0, 5.0);
        let labels: Vec<usize> = (0..m).map(|i| i % 4).collect();
        let (la, ga) = loss_and_output_grad(&u, &labels).unwrap();
        let (lb, gb) = loss_and_output_grad(&u.map(|v| v + shift), &labels).unwrap();
        prop_assert!((la - lb).abs() <= 1e-9 * la.abs().max(1.0));
        for (a, b) in ga.data().iter().zip(gb.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn encoding_is_reproducible(seed in any::<u64>(), episode in any::<u64>(), t in 0usize..100) {
        let images = uniform(&[3, 1, 4, 4], seed, 0.0, 1.0);
        let rng = Rng::new(seed);
        let a = poisson_encode_batch(&images, &[5, 6, 7], &rng, episode, t).unwrap();
        let b = poisson_encode_batch(&images, &[5, 6, 7], &rng, episode, t).unwrap();
        prop_assert_eq!(&a, &b);
        // a sample's frame depends on its id, not its position in the batch
        let swapped = poisson_encode_batch(&images.gather(&[1, 0, 2]).unwrap(), &[6, 5, 7], &rng, episode, t).unwrap();
        prop_assert_eq!(swapped.gather(&[1, 0, 2]).unwrap(), a);
    }

    #[test]
    fn energy_is_linear_in_spike_counts(seed in any::<u64>(), k in 1u64..5) {
        let spec = NetSpec::small_conv([1, 8, 8], [3, 4], 5, Norm::Bntt);
        let resolved = spec.resolve().unwrap();
        let mut r = Rng::new(seed).stream(Stream::Noise, &[0]);
        let mut stats = SpikeStats::empty(&resolved, spec.input, 4);
        stats.samples = 2;
        stats.input_spikes = r.random_range(0..500);
        for l in 0..stats.totals.len() {
            if stats.spiking[l] {
                stats.totals[l] = r.random_range(0..300);
            }
        }
        let mut scaled = stats.clone();
        scaled.input_spikes *= k;
        scaled.totals.iter_mut().for_each(|v| *v *= k);
        let table = EnergyTable::default();
        for rates in [RateAttribution::Input, RateAttribution::Own] {
            let a = energy_report(&spec, &stats, &table, rates).unwrap();
            let b = energy_report(&spec, &scaled, &table, rates).unwrap();
            prop_assert_eq!(a.e_ann, b.e_ann);
            prop_assert!((b.e_snn - k as f64 * a.e_snn).abs() <= 1e-9 * b.e_snn.max(1.0));
        }
    }

    #[test]
    fn shorter_runs_are_prefixes(seed in any::<u64>(), t_exit in 1usize..6) {
        let spec = NetSpec::small_conv([1, 8, 8], [3, 4], 5, Norm::Bntt);
        let model = ModelConfig { timesteps: 6, theta: 0.4, ..ModelConfig::default() };
        let mut net = NetworkState::<f64>::init(&spec, model, &Rng::new(seed)).unwrap();
        let images = uniform(&[4, 1, 8, 8], seed, 0.0, 1.0);
        let ids = [0, 1, 2, 3];
        let rng = Rng::new(seed);
        let stats = forward_unrolled(&net, &images, &ids, &rng, &ForwardOptions::train(0)).unwrap();
        net.commit_batch_stats(&stats).unwrap();
        let full = forward_unrolled(&net, &images, &ids, &rng, &ForwardOptions::eval(1)).unwrap();
        let short = forward_unrolled(&net, &images, &ids, &rng, &ForwardOptions { timesteps: Some(t_exit), ..ForwardOptions::eval(1) }).unwrap();
        // the first t_exit encoder counts agree, and running the rest continues the same trajectory
        prop_assert_eq!(&full.spikes.input_counts[..t_exit], &short.spikes.input_counts[..]);
        for l in 0..full.spikes.layer_counts.len() {
            prop_assert_eq!(&full.spikes.layer_counts[l][..t_exit], &short.spikes.layer_counts[l][..]);
        }
        if t_exit == 6 {
            prop_assert_eq!(full.potentials, short.potentials);
        }
    }

    #[test]
    fn threshold_equivalence_is_exact(seed in any::<u64>(), exp in -3i32..3, t in 1usize..60, lambda in 0.5f64..=1.0) {
        let c = 2f64.powi(exp);
        let mut r = Rng::new(seed).stream(Stream::Noise, &[1]);
        let inputs: Vec<f64> = (0..t).map(|_| r.random_range(-1.0..2.0)).collect();
        let variances: Vec<f64> = (0..t).map(|_| r.random_range(0.01..5.0)).collect();
        let pair = threshold_equivalence_check(&inputs, &vec![c; t], &variances, lambda, 1.0).unwrap();
        prop_assert_eq!(pair.hamming(), 0);
    }
}
