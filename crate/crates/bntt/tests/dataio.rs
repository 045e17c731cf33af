mod common;

use std::path::Path;

use bntt::dataio::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
use bntt::dataio::cifar::{load_cifar10, parse_cifar_records, RECORD_BYTES};
use bntt::dataio::config::RunConfig;
use bntt::dataio::idx::{load_idx_images, load_mnist, parse_idx, IMAGE_MAGIC, LABEL_MAGIC};
use bntt::dataio::DatasetKind;
use bntt::DataError;
use bntt_core::network::{
    evaluate, forward_unrolled, EvalOptions, ForwardOptions, ModelConfig, NetSpec, NetworkState, Norm,
};
use bntt_core::numerics::{Rng, Stream, Tensor};
use common::{idx_bytes, write_mnist_dir};
use proptest::prelude::*;
use rand::Rng as _;

const MNIST_DIR: &str = "/root/data/mnist";

#[test]
fn idx_fixture_scales_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img");
    std::fs::write(&path, idx_bytes(IMAGE_MAGIC, &[1, 2, 2], &[0, 255, 128, 64])).unwrap();
    let x = load_idx_images(&path).unwrap();
    assert_eq!(x.shape(), &[1, 1, 2, 2]);
    let want = [0.0, 1.0, 0.50196, 0.25098];
    for (a, b) in x.data().iter().zip(want) {
        assert!((f64::from(*a) - b).abs() < 5e-6, "{a} vs {b}");
    }
    // independent oracle: the same ratios in exact rational arithmetic
    assert_eq!(x.data()[2], 128.0f32 / 255.0);
}

#[test]
fn idx_errors_are_descriptive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img");
    std::fs::write(&path, idx_bytes(IMAGE_MAGIC, &[3, 28, 28], &[])).unwrap();
    let e = load_idx_images(&path).unwrap_err().to_string();
    assert!(e.contains("truncated payload: 0 of 2352"), "{e}");
    std::fs::write(&path, idx_bytes(LABEL_MAGIC, &[1], &[1])).unwrap();
    assert!(load_idx_images(&path).unwrap_err().to_string().contains("bad magic"));
    let e = load_idx_images(&dir.path().join("missing")).unwrap_err();
    assert!(matches!(e, DataError::Io { .. }));
}

#[test]
fn mnist_headers_and_histograms() {
    let dir = Path::new(MNIST_DIR);
    if !dir.join("train-images-idx3-ubyte").is_file() {
        eprintln!("MNIST not present at {MNIST_DIR}; skipping");
        return;
    }
    let header = std::fs::read(dir.join("train-images-idx3-ubyte")).unwrap();
    let arr = parse_idx(&header, IMAGE_MAGIC, "train").unwrap();
    assert_eq!(arr.magic, 2051);
    assert_eq!(arr.dims, vec![60000, 28, 28]);
    // per-class counts published with the dataset
    let train_counts = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];
    let test_counts = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];
    for (train, want) in [(true, train_counts), (false, test_counts)] {
        let d = load_mnist(dir, train).unwrap();
        let mut hist = [0usize; 10];
        for &y in &d.labels {
            hist[y] += 1;
        }
        assert_eq!(hist, want);
        assert!(d.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(DatasetKind::detect(dir).unwrap(), DatasetKind::Mnist);
}

#[test]
fn load_order_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist_dir(dir.path(), 20, 10, 1, false);
    let a = load_mnist(dir.path(), true).unwrap();
    let b = load_mnist(dir.path(), true).unwrap();
    assert_eq!(a.images, b.images);
    assert_eq!(a.labels, (0..20).map(|i| i % 10).collect::<Vec<_>>());
}

fn cifar_records(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        out.push(y);
        out.extend((0..3072).map(|p| ((p + i) % 256) as u8));
    }
    out
}

#[test]
fn cifar_batches() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("cifar-10-batches-bin");
    std::fs::create_dir_all(&base).unwrap();
    for b in 1..=5 {
        let labels: Vec<u8> = (0..10).map(|i| ((i + b) % 10) as u8).collect();
        std::fs::write(base.join(format!("data_batch_{b}.bin")), cifar_records(&labels)).unwrap();
    }
    std::fs::write(base.join("test_batch.bin"), cifar_records(&[3, 4])).unwrap();
    assert_eq!(DatasetKind::detect(dir.path()).unwrap(), DatasetKind::Cifar10);
    let train = load_cifar10(dir.path(), true).unwrap();
    assert_eq!(train.images.shape(), &[50, 3, 32, 32]);
    let mut hist = [0usize; 10];
    for &y in &train.labels {
        hist[y] += 1;
    }
    assert_eq!(hist, [5; 10]);
    // channel-major layout: pixel p of record i is ((p + i) mod 256) / 255
    let test = load_cifar10(dir.path(), false).unwrap();
    assert_eq!(test.labels, vec![3, 4]);
    assert_eq!(test.images.data()[3072 + 1024], ((1024 + 1) % 256) as f32 / 255.0);

    let mut bad = cifar_records(&[1]);
    bad.pop();
    std::fs::write(base.join("test_batch.bin"), &bad).unwrap();
    let e = load_cifar10(dir.path(), false).unwrap_err().to_string();
    assert!(e.contains("not a multiple of the 3073-byte record"), "{e}");
    let (mut x, mut y) = (Vec::new(), Vec::new());
    assert!(parse_cifar_records(&cifar_records(&[11]), "r", &mut x, &mut y).is_err());
    assert_eq!(RECORD_BYTES, 3073);
}

fn trained_like(seed: u64, norm: Norm) -> Checkpoint {
    let spec = NetSpec::small_conv([1, 8, 8], [3, 4], 5, norm);
    let model = ModelConfig {
        timesteps: 3,
        theta: 0.4,
        ..Default::default()
    };
    let rng = Rng::new(seed);
    let mut net = NetworkState::<f32>::init(&spec, model, &rng).unwrap();
    let x = Tensor::from_fn(&[4, 1, 8, 8], |i| ((i * 7 + seed as usize) % 10) as f32 / 9.0);
    let out = forward_unrolled(&net, &x, &[0, 1, 2, 3], &rng, &ForwardOptions::train(0)).unwrap();
    net.commit_batch_stats(&out).unwrap();
    let mut r = rng.stream(Stream::Noise, &[99]);
    for p in &mut net.layers {
        for t in [&mut p.weight_velocity, &mut p.gamma_velocity].into_iter().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
        }
        if let Some(bn) = &mut p.norm {
            bn.gamma
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = r.random_range(0.0..2.0));
        }
    }
    Checkpoint {
        net,
        seed,
        epoch: 2,
        iteration: 17,
    }
}

fn assert_bitwise_equal(a: &NetworkState<f32>, b: &NetworkState<f32>) {
    assert_eq!(a.spec, b.spec);
    assert_eq!(a.model, b.model);
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for (x, y) in a.layers.iter().zip(&b.layers) {
        for (s, t) in [
            (&x.weight, &y.weight),
            (&x.weight_velocity, &y.weight_velocity),
            (&x.gamma_velocity, &y.gamma_velocity),
        ] {
            assert_eq!(s.as_ref().map(bits), t.as_ref().map(bits));
        }
        match (&x.norm, &y.norm) {
            (Some(m), Some(n)) => {
                assert_eq!(bits(&m.gamma), bits(&n.gamma));
                assert_eq!(bits(&m.running_mean), bits(&n.running_mean));
                assert_eq!(bits(&m.running_var), bits(&n.running_var));
                assert_eq!(m.populated_slots(), n.populated_slots());
                assert_eq!(m.is_time_shared(), n.is_time_shared());
            }
            (None, None) => {}
            _ => panic!("normalization presence differs"),
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    for norm in [Norm::Bntt, Norm::SharedBn, Norm::None] {
        let ck = trained_like(3, norm);
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        save_checkpoint(&p1, &ck).unwrap();
        let back = load_checkpoint(&p1, Some(&ck.net.spec)).unwrap();
        assert_bitwise_equal(&ck.net, &back.net);
        assert_eq!((back.seed, back.epoch, back.iteration), (3, 2, 17));
        save_checkpoint(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}

#[test]
fn reloaded_net_evaluates_identically() {
    let spec = NetSpec::mlp([1, 28, 28], &[12], 10, Norm::Bntt);
    let model = ModelConfig {
        timesteps: 5,
        theta: 0.3,
        ..Default::default()
    };
    let rng = Rng::new(8);
    let mut net = NetworkState::<f32>::init(&spec, model, &rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_mnist_dir(dir.path(), 10, 30, 2, false);
    let data = load_mnist(dir.path(), false).unwrap();
    let ids = [0u64, 1, 2, 3];
    let x = data.batch(&[0, 1, 2, 3]).unwrap().0;

    // running statistics that were never populated are refused before and after a reload
    let fresh = Checkpoint {
        net: net.clone(),
        seed: 8,
        epoch: 0,
        iteration: 0,
    };
    let fresh_back = decode_checkpoint(&encode_checkpoint(&fresh).unwrap(), None).unwrap();
    assert!(evaluate(&fresh.net, &data, &EvalOptions::new(7), &rng).is_err());
    assert!(evaluate(&fresh_back.net, &data, &EvalOptions::new(7), &rng).is_err());

    let out = forward_unrolled(&net, &x, &ids, &rng, &ForwardOptions::train(0)).unwrap();
    net.commit_batch_stats(&out).unwrap();
    let ck = Checkpoint {
        net,
        seed: 8,
        epoch: 0,
        iteration: 1,
    };
    let back = decode_checkpoint(&encode_checkpoint(&ck).unwrap(), None).unwrap();
    let a = evaluate(&ck.net, &data, &EvalOptions::new(7), &rng).unwrap();
    let b = evaluate(&back.net, &data, &EvalOptions::new(7), &rng).unwrap();
    assert_eq!(a, b);
    let opts = ForwardOptions::eval(5);
    let pa = forward_unrolled(&ck.net, &x, &ids, &rng, &opts).unwrap().potentials;
    let pb = forward_unrolled(&back.net, &x, &ids, &rng, &opts).unwrap().potentials;
    assert_eq!(pa, pb);
}

/// Rebuilds a file around an edited manifest with a valid checksum.
fn with_manifest(bytes: &[u8], edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[20..20 + len]).unwrap();
    edit(&mut manifest);
    let json = serde_json::to_vec(&manifest).unwrap();
    let mut out = bytes[..12].to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[20 + len..bytes.len() - 4]);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

#[test]
fn checkpoint_rejects_tampering() {
    let ck = trained_like(4, Norm::Bntt);
    let good = encode_checkpoint(&ck).unwrap();
    assert!(decode_checkpoint(&with_manifest(&good, |_| {}), None).is_ok());

    let shape = with_manifest(&good, |m| {
        let d = &mut m["arrays"][0]["shape"][0];
        *d = serde_json::json!(d.as_u64().unwrap() + 1);
    });
    assert!(decode_checkpoint(&shape, None).is_err());
    let swapped = with_manifest(&good, |m| {
        let a = m["arrays"][0]["shape"].clone();
        m["arrays"][0]["shape"] = serde_json::json!([a[1], a[0], a[2], a[3]]);
    });
    assert!(decode_checkpoint(&swapped, None).is_err());
    let arch = with_manifest(&good, |m| {
        m["architecture"]["layers"][0]["out_channels"] = serde_json::json!(5)
    });
    assert!(decode_checkpoint(&arch, None).is_err());
    let version = with_manifest(&good, |m| m["format_version"] = serde_json::json!(2));
    assert!(decode_checkpoint(&version, None).is_err());
    let unknown = with_manifest(&good, |m| m["extra"] = serde_json::json!(1));
    assert!(decode_checkpoint(&unknown, None).is_err());

    let mut v2 = good.clone();
    v2[8] = 2;
    assert!(decode_checkpoint(&v2, None)
        .unwrap_err()
        .to_string()
        .contains("format version 2"));
    let mut flipped = good.clone();
    let mid = good.len() - 40;
    flipped[mid] ^= 0x10;
    assert!(decode_checkpoint(&flipped, None)
        .unwrap_err()
        .to_string()
        .contains("checksum"));
    assert!(decode_checkpoint(&good[..good.len() - 9], None).is_err());
    assert!(decode_checkpoint(b"BNTTCKPT", None).is_err());

    let other = NetSpec::small_conv([1, 8, 8], [3, 5], 5, Norm::Bntt);
    let e = decode_checkpoint(&good, Some(&other)).unwrap_err();
    assert!(matches!(e, DataError::Mismatch(_)), "{e}");
}

#[test]
fn config_file_errors_name_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "train.lr = 0.1\n# note\ntrain.momentun = 0.9\n").unwrap();
    let e = RunConfig::load(&path).unwrap_err().to_string();
    assert!(e.ends_with("run.cfg:3: unknown key `train.momentun`"), "{e}");
    std::fs::write(&path, "").unwrap();
    let c = RunConfig::load(&path).unwrap();
    assert_eq!(
        (c.train.base_lr, c.train.sgd.momentum, c.train.sgd.weight_decay),
        (0.3, 0.9, 5e-4)
    );
    assert_eq!(c.model.timesteps, 25);
}

fn mutate(bytes: &mut Vec<u8>, r: &mut impl rand::Rng, header: usize) {
    match r.random_range(0..4) {
        0 => {
            let i = r.random_range(0..header.min(bytes.len()));
            bytes[i] = r.random();
        }
        1 => {
            let i = r.random_range(0..header.min(bytes.len()));
            bytes[i] ^= 1 << r.random_range(0..8);
        }
        2 => {
            let n = r.random_range(0..bytes.len());
            bytes.truncate(n);
        }
        _ => {
            let extra = r.random_range(1..16);
            bytes.extend((0..extra).map(|_| r.random::<u8>()));
        }
    }
}

#[test]
fn fuzzed_idx_headers_never_panic() {
    let good = idx_bytes(IMAGE_MAGIC, &[2, 3, 3], &[7; 18]);
    let mut r = Rng::new(11).stream(Stream::Noise, &[0]);
    let mut accepted = 0;
    for _ in 0..10_000 {
        let mut b = good.clone();
        mutate(&mut b, &mut r, 16);
        if let Ok(arr) = parse_idx(&b, IMAGE_MAGIC, "fuzz") {
            assert_eq!(arr.data.len(), arr.dims.iter().product::<usize>());
            assert!(arr.data.len() + 16 <= b.len());
            accepted += 1;
        }
    }
    assert!(accepted < 10_000);
}

#[test]
fn fuzzed_checkpoints_never_panic() {
    let good = encode_checkpoint(&trained_like(5, Norm::Bntt)).unwrap();
    let mut r = Rng::new(12).stream(Stream::Noise, &[1]);
    for i in 0..10_000 {
        let mut b = good.clone();
        mutate(&mut b, &mut r, 400);
        // half the cases get a valid checksum so the structural checks run
        if i % 2 == 0 && b.len() > 4 {
            let n = b.len() - 4;
            let crc = crc32fast::hash(&b[..n]);
            b[n..].copy_from_slice(&crc.to_le_bytes());
        }
        let _ = decode_checkpoint(&b, None);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn round_trip_for_random_states(seed in 0u64..1_000_000, shared in any::<bool>()) {
        let ck = trained_like(seed, if shared { Norm::SharedBn } else { Norm::Bntt });
        let bytes = encode_checkpoint(&ck).unwrap();
        let back = decode_checkpoint(&bytes, Some(&ck.net.spec)).unwrap();
        assert_bitwise_equal(&ck.net, &back.net);
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }
}
