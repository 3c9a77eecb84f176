//! End-to-end checks of the `con2da` binary: artifact creation, exit codes,
//! and rerun determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn con2da(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_con2da"))
        .args(args)
        .current_dir(dir)
        .env("C2DA_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn write_fast_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "dataset_spec": {
            "generator": "gaussian_blobs",
            "num_classes": 2,
            "samples_per_domain": 34,
            "shift_kind": "rotation",
            "shift_magnitude": 10.0,
            "seed": 3
        },
        "method": "con2da",
        "train": {
            "dims": {"input_dim": 768, "hidden": [16], "feature_dim": 12, "num_classes": 2},
            "total_iterations": 3,
            "patience": 3,
            "seed": 11
        },
        "repeats": 1,
        "output_dir": dir.join("out").to_string_lossy()
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn gen_data_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = con2da(
        &[
            "gen-data",
            "--generator",
            "textured-grid",
            "--classes",
            "2",
            "--samples-per-domain",
            "34",
            "--shift-kind",
            "channel-swap",
            "--shift-magnitude",
            "1.0",
            "--seed",
            "7",
            "--shots",
            "3",
            "--out",
            "data.ssda",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = con2da_core::data::load_dataset(dir.path().join("data.ssda")).unwrap();
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.target_labeled().len(), 6);
}

#[test]
fn train_ablation_sweep_and_report_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fast_config(dir.path());
    let cfg_str = config.to_string_lossy().to_string();

    let out = con2da(&["train", "--config", &cfg_str], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/summary.json").exists());
    assert!(dir.path().join("out/seed_0/metrics.csv").exists());

    let ablation_out = dir.path().join("ablation_out");
    let out = con2da(
        &["ablation", "--config", &cfg_str, "--out", &ablation_out.to_string_lossy()],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ablation_out.join("ablation.json").exists());

    let sweep_out = dir.path().join("sweep_out");
    let out = con2da(
        &[
            "sweep",
            "--config",
            &cfg_str,
            "--t-grid",
            "0.05,0.5",
            "--tau-grid",
            "0.9",
            "--out",
            &sweep_out.to_string_lossy(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sweep_out.join("sweep.json").exists());

    let out = con2da(
        &["report", "--in", &dir.path().join("out").to_string_lossy(), "--format", "csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/summary.csv").exists());
}

#[test]
fn aug_study_includes_weak_only_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fast_config(dir.path());
    let study_out = dir.path().join("study");
    let out = con2da(
        &[
            "aug-study",
            "--config",
            &config.to_string_lossy(),
            "--policies",
            "rand_augment",
            "--out",
            &study_out.to_string_lossy(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("{}"), "weak-only row missing: {stdout}");
    assert!(stdout.contains("{rand_augment}"), "{stdout}");
}

#[test]
fn config_errors_exit_1_and_runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();

    // Invalid hyperparameter in the config file.
    let config = dir.path().join("bad.json");
    fs::write(
        &config,
        serde_json::json!({
            "dataset_spec": {"generator": "gaussian_blobs", "num_classes": 2,
                              "samples_per_domain": 34, "shift_kind": "rotation",
                              "shift_magnitude": 1.0, "seed": 0},
            "train": {"temperature": -1.0},
            "output_dir": dir.path().join("out").to_string_lossy()
        })
        .to_string(),
    )
    .unwrap();
    let out = con2da(&["train", "--config", &config.to_string_lossy()], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // Missing dataset file is a runtime failure.
    let config = dir.path().join("missing.json");
    fs::write(
        &config,
        serde_json::json!({
            "dataset_path": dir.path().join("nope.ssda").to_string_lossy(),
            "train": {"dims": {"input_dim": 768, "hidden": [16], "feature_dim": 12, "num_classes": 2},
                       "total_iterations": 2, "patience": 2},
            "repeats": 1,
            "output_dir": dir.path().join("out").to_string_lossy()
        })
        .to_string(),
    )
    .unwrap();
    let out = con2da(&["train", "--config", &config.to_string_lossy()], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fast_config(dir.path());
    let cfg_str = config.to_string_lossy().to_string();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = con2da(
            &["train", "--config", &cfg_str, "--out", &out.to_string_lossy()],
            dir.path(),
        );
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(
        fs::read(out_a.join("summary.json")).unwrap(),
        fs::read(out_b.join("summary.json")).unwrap()
    );
    assert_eq!(
        fs::read(out_a.join("seed_0/metrics.csv")).unwrap(),
        fs::read(out_b.join("seed_0/metrics.csv")).unwrap()
    );
}
