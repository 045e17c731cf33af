mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{write_mnist_dir, TOY_CONFIG};

fn bntt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bntt"))
        .args(args)
        .env("SNN_NUM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bntt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in {stdout}"))
        .to_owned()
}

struct Toy {
    _dir: tempfile::TempDir,
    data: PathBuf,
    config: PathBuf,
    root: PathBuf,
}

fn toy() -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_mnist_dir(&data, 10, 10, 3, false);
    let config = dir.path().join("toy.cfg");
    std::fs::write(&config, TOY_CONFIG).unwrap();
    let root = dir.path().to_path_buf();
    Toy {
        _dir: dir,
        data,
        config,
        root,
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(t: &Toy, out: &Path) -> String {
    ok(&["train", "--config", s(&t.config), "--data", s(&t.data), "--out", s(out)])
}

#[test]
fn usage_errors_exit_with_two() {
    let out = bntt(&["train", "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
    assert_eq!(bntt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        bntt(&["noise", "--checkpoint", "c", "--data", "d", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(bntt(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one() {
    let t = toy();
    let bad = t.root.join("bad.cfg");
    std::fs::write(&bad, "train.momentun = 0.9\n").unwrap();
    let out = bntt(&[
        "train",
        "--config",
        s(&bad),
        "--data",
        s(&t.data),
        "--out",
        s(&t.root.join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg:1: unknown key `train.momentun`"), "{err}");

    let out = bntt(&[
        "eval",
        "--checkpoint",
        s(&t.root.join("none.bin")),
        "--data",
        s(&t.data),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn toy_run_writes_every_artifact() {
    let t = toy();
    let out = t.root.join("run");
    let stdout = train(&t, &out);
    assert!(value(&stdout, "test accuracy").parse::<f64>().is_ok());
    for f in [
        "manifest.json",
        "metrics.csv",
        "checkpoint.bin",
        "checkpoint_epoch0001.bin",
        "checkpoint_epoch0002.bin",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["build_id"]
        .as_str()
        .unwrap()
        .starts_with(env!("CARGO_PKG_VERSION")));
    assert!(manifest["config"]
        .as_array()
        .unwrap()
        .iter()
        .any(|l| l == "train.timesteps = 4"));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,lr,train_loss,train_acc,eval_acc,wall_time_s");
    assert_eq!(lines.len(), 4);

    let ck = out.join("checkpoint.bin");
    let ck = s(&ck);
    let data = s(&t.data);
    let full = ok(&["eval", "--checkpoint", ck, "--data", data]);
    assert_eq!(value(&full, "timesteps"), "4");
    let one = ok(&["eval", "--checkpoint", ck, "--data", data, "--timesteps", "1"]);
    assert_eq!(value(&one, "timesteps"), "1");
    assert_eq!(
        bntt(&["eval", "--checkpoint", ck, "--data", data, "--timesteps", "5"])
            .status
            .code(),
        Some(1)
    );

    // a threshold no scale can fall below keeps every timestep
    let exit_dir = t.root.join("exit");
    let ex = ok(&[
        "eval",
        "--checkpoint",
        ck,
        "--data",
        data,
        "--early-exit-tau",
        "-1",
        "--out",
        s(&exit_dir),
    ]);
    assert_eq!(value(&ex, "t_exit"), "4");
    assert_eq!(value(&ex, "accuracy"), value(&full, "accuracy"));
    assert!(exit_dir.join("exit.txt").is_file() && exit_dir.join("manifest.json").is_file());
    let ex = ok(&["eval", "--checkpoint", ck, "--data", data, "--early-exit-tau", "0.1"]);
    let t_exit: usize = value(&ex, "t_exit").parse().unwrap();
    assert!((1..=4).contains(&t_exit));

    let e_dir = t.root.join("energy");
    ok(&["energy", "--checkpoint", ck, "--data", data, "--out", s(&e_dir)]);
    assert!(e_dir.join("spikes.csv").is_file() && e_dir.join("energy.txt").is_file());
    let spikes = std::fs::read_to_string(e_dir.join("spikes.csv")).unwrap();
    assert!(spikes.starts_with("layer,kind,neurons,spikes,rate,t1,t2,t3,t4"));
    assert_eq!(spikes.lines().count(), 1 + 1 + 2);

    let n_dir = t.root.join("noise");
    ok(&[
        "noise",
        "--checkpoint",
        ck,
        "--data",
        data,
        "--out",
        s(&n_dir),
        "--sigmas",
        "0,0.2,0.4,0.6",
    ]);
    let noise = std::fs::read_to_string(n_dir.join("noise.csv")).unwrap();
    let rows: Vec<&str> = noise.lines().collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0], "sigma,accuracy");
    assert_eq!(rows[1], format!("0,{}", value(&full, "accuracy")));

    let a_dir = t.root.join("attack");
    ok(&[
        "attack",
        "--checkpoint",
        ck,
        "--data",
        data,
        "--out",
        s(&a_dir),
        "--eps",
        "0,0.1",
    ]);
    let fgsm = std::fs::read_to_string(a_dir.join("fgsm.csv")).unwrap();
    assert_eq!(fgsm.lines().nth(1).unwrap(), format!("0,{}", value(&full, "accuracy")));
    assert_eq!(fgsm.lines().count(), 3);
}

fn strip_wall_time(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect()
}

#[test]
fn same_seed_gives_identical_metrics() {
    let t = toy();
    let (a, b) = (t.root.join("a"), t.root.join("b"));
    train(&t, &a);
    train(&t, &b);
    let ma = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mb = std::fs::read_to_string(b.join("metrics.csv")).unwrap();
    assert_eq!(strip_wall_time(&ma), strip_wall_time(&mb));
    assert_eq!(
        std::fs::read(a.join("checkpoint.bin")).unwrap(),
        std::fs::read(b.join("checkpoint.bin")).unwrap()
    );

    let c = t.root.join("c");
    ok(&[
        "train",
        "--config",
        s(&t.config),
        "--data",
        s(&t.data),
        "--out",
        s(&c),
        "--seed",
        "8",
    ]);
    assert_ne!(
        std::fs::read(a.join("checkpoint.bin")).unwrap(),
        std::fs::read(c.join("checkpoint.bin")).unwrap()
    );
}

#[test]
fn silent_network_costs_no_accumulates() {
    let t = toy();
    let blank = t.root.join("blank");
    write_mnist_dir(&blank, 10, 10, 4, true);
    let cfg = t.root.join("untrained.cfg");
    // one epoch with a vanishing learning rate leaves the network essentially untrained
    std::fs::write(
        &cfg,
        format!("{TOY_CONFIG}train.lr = 1e-12\n")
            .replace("train.epochs = 3", "train.epochs = 1")
            .replace("train.lr = 0.05\n", ""),
    )
    .unwrap();
    let run = t.root.join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&blank), "--out", s(&run)]);
    let e_dir = t.root.join("energy");
    let stdout = ok(&[
        "energy",
        "--checkpoint",
        s(&run.join("checkpoint.bin")),
        "--data",
        s(&blank),
        "--out",
        s(&e_dir),
    ]);
    assert_eq!(value(&stdout, "e_snn_pj"), "0");
    assert_eq!(value(&stdout, "e_ann_over_e_snn"), "inf");
}

#[test]
fn inputs_are_left_untouched() {
    let t = toy();
    let before: Vec<Vec<u8>> = std::fs::read_dir(&t.data)
        .unwrap()
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    let out = t.root.join("run");
    train(&t, &out);
    let ck = std::fs::read(out.join("checkpoint.bin")).unwrap();
    ok(&[
        "eval",
        "--checkpoint",
        s(&out.join("checkpoint.bin")),
        "--data",
        s(&t.data),
        "--out",
        s(&out.join("ev")),
    ]);
    assert_eq!(std::fs::read(out.join("checkpoint.bin")).unwrap(), ck);
    let after: Vec<Vec<u8>> = std::fs::read_dir(&t.data)
        .unwrap()
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    assert_eq!(before, after);
}
