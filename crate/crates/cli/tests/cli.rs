//! End-to-end checks of the command-line surface: dataset generation,
//! training, evaluation, statistics, and the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn eegmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegmix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn synth_tiny(dir: &Path) {
    let out = eegmix(&[
        "synth",
        "--subjects",
        "10",
        "--dense",
        "8",
        "--sparse",
        "3",
        "--epochs-per-subject",
        "2",
        "--rate",
        "128",
        "--seed",
        "4",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(path: &Path, data_dir: &Path, view: &str, attention: bool) {
    let cfg = serde_json::json!({
        "data_dir": data_dir.to_str().unwrap(),
        "train_view": view,
        "attention": attention,
        "d1": 4,
        "k": 4,
        "scale": 8,
        "batch_size": 4,
        "epochs": 2,
        "seed": 3,
    });
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

#[test]
fn synth_train_eval_round_trip_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_tiny(&data);
    for name in ["manifest.json", "epochs.bin", "montage_dense.csv", "montage_sparse.csv"] {
        assert!(data.join(name).exists(), "{name} missing");
    }

    let cfg_path = tmp.path().join("train.json");
    write_config(&cfg_path, &data, "mixed", true);

    let out_a = tmp.path().join("run_a");
    let out_b = tmp.path().join("run_b");
    for out_dir in [&out_a, &out_b] {
        let out = eegmix(&[
            "train",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ma = std::fs::read(out_a.join("metrics.json")).unwrap();
    let mb = std::fs::read(out_b.join("metrics.json")).unwrap();
    assert_eq!(ma, mb, "metrics JSON must be byte-identical across reruns");

    let out = eegmix(&[
        "eval",
        "--checkpoint",
        out_a.join("model.ckpt").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--view",
        "sparse",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let acc = parsed["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    // byte-identical stdout on re-evaluation
    let again = eegmix(&[
        "eval",
        "--checkpoint",
        out_a.join("model.ckpt").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--view",
        "sparse",
    ]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn stats_subcommand_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    std::fs::write(&a, "[1,2,3,4,5]").unwrap();
    std::fs::write(&b, "[3,4,5,6,7]").unwrap();
    let out = eegmix(&["stats", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["t"].as_f64().unwrap() - (-2.0)).abs() < 1e-9);
    assert!((v["p"].as_f64().unwrap() - 0.0805).abs() < 1e-3);
}

#[test]
fn validation_failures_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_tiny(&data);

    // attention off on mixed montages is a config error
    let cfg_path = tmp.path().join("bad.json");
    write_config(&cfg_path, &data, "mixed", false);
    let out = eegmix(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // unknown CLI flag is a validation failure
    let out = eegmix(&["synth", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_2() {
    // missing dataset directory: an IO error, not a validation error
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    write_config(&cfg_path, &tmp.path().join("nope"), "dense", true);
    let out = eegmix(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_lists_kernels() {
    let out = eegmix(&["gradcheck", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    for kernel in [
        "conv2d_3x3",
        "maxpool2x2_ceil",
        "dense",
        "relu",
        "dropout50",
        "softmax_cross_entropy",
        "spatial_attention",
        "mixing_1x1",
        "composite_model",
    ] {
        assert!(text.contains(kernel), "report lacks {kernel}:\n{text}");
    }
    assert!(text.contains("gradcheck: PASS"));
}
