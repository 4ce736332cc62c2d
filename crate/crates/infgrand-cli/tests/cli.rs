use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infgrand"))
}

fn write_manifest(dir: &Path) -> std::path::PathBuf {
    let manifest = serde_json::json!({
        "dataset": {"synthetic": {
            "num_nodes": 90, "num_classes": 3, "feature_dim": 8,
            "intra_p": 0.12, "inter_p": 0.01, "separation": 2.5, "noise": 1.0, "seed": 3
        }},
        "config": {
            "teacher_hidden": 8, "student_hidden": 8,
            "max_epochs": 12, "patience": 12, "dropout": 0.0
        },
        "seeds": [0, 1],
        "split": {"per_class": 8, "val_size": 20, "test_size": 30, "observed_fraction": 0.6}
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

fn write_tiny_dataset(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("edges.txt"), "0 1\n1 2\n2 3\n3 0\n0 2\n").unwrap();
    std::fs::write(
        dir.join("features.txt"),
        "1.0 0.1\n0.9 0.2\n-0.8 1.0\n-1.0 0.9\n",
    )
    .unwrap();
    std::fs::write(dir.join("labels.txt"), "0\n0\n1\n1\n").unwrap();
}

#[test]
fn distill_subcommand_runs_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["distill", "--config"])
        .arg(&manifest)
        .args(["--set", "max_epochs=8"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["meta"]["config"]["max_epochs"], 8);
    assert_eq!(report["arms"].as_array().unwrap().len(), 3);
    assert!(out.join("epochs.csv").exists());
}

#[test]
fn train_teacher_writes_checkpoint_then_eval_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path());
    let out = dir.path().join("teacher-out");
    let status = bin()
        .args(["train-teacher", "--config"])
        .arg(&manifest)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("teacher.ckpt").exists());

    // dump the synthetic dataset so eval can reload it
    let data_dir = dir.path().join("data");
    let spec = infgrand::data::SyntheticSpec {
        num_nodes: 90,
        num_classes: 3,
        feature_dim: 8,
        intra_p: 0.12,
        inter_p: 0.01,
        separation: 2.5,
        noise: 1.0,
        seed: 3,
    };
    let data = infgrand::data::generate_synthetic(&spec).unwrap();
    infgrand::data::save_dataset(&data_dir, &data).unwrap();

    let output = bin()
        .args(["eval", "--checkpoint"])
        .arg(out.join("teacher.ckpt"))
        .arg("--dataset")
        .arg(&data_dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let acc = parsed["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(parsed["nodes"], 90);
}

#[test]
fn influence_and_propagate_caches_hit_on_second_call() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    write_tiny_dataset(&data_dir);

    let cache = dir.path().join("cache.json");
    let out1 = bin()
        .args(["influence", "--dataset"])
        .arg(&data_dir)
        .args(["--mode", "khop", "--k", "2", "--out"])
        .arg(&cache)
        .output()
        .unwrap();
    assert!(out1.status.success());
    let v1: serde_json::Value = serde_json::from_slice(&out1.stdout).unwrap();
    assert_eq!(v1["cache_hit"], false);
    let out2 = bin()
        .args(["influence", "--dataset"])
        .arg(&data_dir)
        .args(["--mode", "khop", "--k", "2", "--out"])
        .arg(&cache)
        .output()
        .unwrap();
    let v2: serde_json::Value = serde_json::from_slice(&out2.stdout).unwrap();
    assert_eq!(v2["cache_hit"], true);

    let xtilde = dir.path().join("xtilde.bin");
    let p1 = bin()
        .args(["propagate", "--dataset"])
        .arg(&data_dir)
        .args(["--p", "2", "--pool", "mean", "--out"])
        .arg(&xtilde)
        .output()
        .unwrap();
    assert!(p1.status.success());
    let v: serde_json::Value = serde_json::from_slice(&p1.stdout).unwrap();
    assert_eq!(v["rows"], 4);
    assert_eq!(v["cols"], 2);
    let p2 = bin()
        .args(["propagate", "--dataset"])
        .arg(&data_dir)
        .args(["--p", "2", "--pool", "mean", "--out"])
        .arg(&xtilde)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&p2.stdout).unwrap();
    assert_eq!(v["cache_hit"], true);
}

#[test]
fn bad_config_exits_with_error_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path());
    let status = bin()
        .args(["distill", "--config"])
        .arg(&manifest)
        .args(["--set", "lambda=3.0"])
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn sweep_requires_knob_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path());
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&manifest)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // with knob and grid supplied via --set it runs
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&manifest)
        .args([
            "--set",
            "knob=\"lambda\"",
            "--set",
            "grid=[\"0.0\",\"0.5\"]",
        ])
        .args(["--set", "max_epochs=4"])
        .args(["--seeds", "0"])
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("out").join("sweep.csv").exists());
}

#[test]
fn failed_directional_assertion_exits_one() {
    // at this noise level the influence weighting is known to hurt, so the
    // ablation's directional check fails deterministically
    let dir = tempfile::tempdir().unwrap();
    let manifest = serde_json::json!({
        "dataset": {"synthetic": {
            "num_nodes": 600, "num_classes": 3, "feature_dim": 16,
            "intra_p": 0.02, "inter_p": 0.002, "separation": 1.0, "noise": 2.0, "seed": 200
        }},
        "config": {
            "teacher_hidden": 32, "student_hidden": 32,
            "max_epochs": 300, "patience": 30, "dropout": 0.2,
            "influence_mode": "khop"
        },
        "seeds": [0, 1, 2, 3, 4],
        "split": {"per_class": 20, "val_size": 120, "test_size": 240}
    });
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let output = bin()
        .args(["ablate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("directional check: FAIL"), "{}", stdout);
}
