//! End-to-end CLI checks on a miniature dataset: pipeline contracts,
//! byte-level determinism, exit codes, and config-file handling.

use flicker_cli::run;
use std::fs;
use std::path::{Path, PathBuf};

fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Tiny deterministic workspace shared by the smoke tests.
struct Mini {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    model: PathBuf,
}

fn mini() -> Mini {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let model = root.join("model_a.flkm");
    assert_eq!(
        run([
            "gen-data",
            "--out",
            &p(&data),
            "--classes",
            "2",
            "--clips-per-class",
            "4",
            "--eval-clips-per-class",
            "3",
            "--frames",
            "6",
            "--height",
            "10",
            "--width",
            "10",
            "--seed",
            "3",
        ]),
        0
    );
    assert_eq!(
        run([
            "train",
            "--data",
            &p(&data),
            "--out",
            &p(&model),
            "--epochs",
            "20",
            "--batch-size",
            "4",
            "--seed",
            "3",
        ]),
        0
    );
    Mini {
        _dir: dir,
        root,
        data,
        model,
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                entries.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    entries.sort();
    entries
}

#[test]
fn pipeline_emits_declared_artifacts() {
    let m = mini();
    let out = m.root.join("attack");
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--mode",
            "universal",
            "--linf-pct",
            "20",
            "--iterations",
            "40",
            "--eval-every",
            "20",
            "--learning-rate",
            "0.01",
            "--out-dir",
            &p(&out),
            "--seed",
            "5",
        ]),
        0
    );
    assert!(out.join("attack_result.json").exists());
    assert!(out.join("delta.flkp").exists());
    assert!(out.join("delta.flkp.txt").exists());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("attack,model,fooling_pct"));
    assert!(csv.lines().nth(1).unwrap().starts_with("universal,model_a,"));

    // the stored trace respects the budget
    let delta = flicker_core::io::load_perturbation::<f64>(&out.join("delta.flkp")).unwrap();
    assert!(delta.linf() <= 0.2 * delta.dims().range() + 1e-6);

    // eval consumes the stored trace
    let eval_dir = m.root.join("eval");
    assert_eq!(
        run([
            "eval",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--delta",
            &p(&out.join("delta.flkp")),
            "--tau-mode",
            "sweep",
            "--out-dir",
            &p(&eval_dir),
            "--seed",
            "5",
        ]),
        0
    );
    assert!(eval_dir.join("eval_report.json").exists());

    // report aggregates both artifacts
    let report_dir = m.root.join("report");
    let inputs = format!(
        "{},{}",
        p(&out.join("attack_result.json")),
        p(&eval_dir.join("eval_report.json"))
    );
    assert_eq!(
        run([
            "report",
            "--kind",
            "universal",
            "--inputs",
            &inputs,
            "--out-dir",
            &p(&report_dir),
        ]),
        0
    );
    let report = fs::read_to_string(report_dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let plot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("plot.json")).unwrap()).unwrap();
    assert_eq!(plot["schema"], "flicker/plot/v1");
}

#[test]
fn reruns_are_byte_identical() {
    let m = mini();
    for sub in ["a", "b"] {
        let out = m.root.join(format!("run_{}", sub));
        assert_eq!(
            run([
                "attack",
                "--model",
                &p(&m.model),
                "--data",
                &p(&m.data),
                "--mode",
                "universal",
                "--iterations",
                "30",
                "--eval-every",
                "10",
                "--out-dir",
                &p(&out),
                "--seed",
                "9",
            ]),
            0
        );
    }
    assert_eq!(
        read_dir_bytes(&m.root.join("run_a")),
        read_dir_bytes(&m.root.join("run_b"))
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let m = mini();
    let cfg_path = m.root.join("exp.cfg");
    fs::write(
        &cfg_path,
        "seed = 5\n[attack]\nmode = universal\niterations = 30\neval_every = 10\nlearning_rate = 0.01\n",
    )
    .unwrap();
    let from_cfg = m.root.join("from_cfg");
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--config",
            &p(&cfg_path),
            "--out-dir",
            &p(&from_cfg),
        ]),
        0
    );
    let from_flags = m.root.join("from_flags");
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--mode",
            "universal",
            "--iterations",
            "30",
            "--eval-every",
            "10",
            "--learning-rate",
            "0.01",
            "--seed",
            "5",
            "--out-dir",
            &p(&from_flags),
        ]),
        0
    );
    assert_eq!(read_dir_bytes(&from_cfg), read_dir_bytes(&from_flags));

    // a flag overrides the config value: different seed changes the run
    let overridden = m.root.join("overridden");
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--config",
            &p(&cfg_path),
            "--seed",
            "6",
            "--out-dir",
            &p(&overridden),
        ]),
        0
    );
    let a: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(from_cfg.join("attack_result.json")).unwrap(),
    )
    .unwrap();
    let b: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(overridden.join("attack_result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(a["config"]["seed"], 5);
    assert_eq!(b["config"]["seed"], 6);
}

#[test]
fn bad_config_is_a_validation_exit() {
    let m = mini();
    let cfg_path = m.root.join("bad.cfg");
    fs::write(&cfg_path, "[attack]\nfrobnicate = 1\n").unwrap();
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--config",
            &p(&cfg_path),
            "--out-dir",
            &p(&m.root.join("x")),
        ]),
        1
    );
}

#[test]
fn usage_and_validation_exit_codes() {
    // unknown subcommand and unknown flag are usage errors
    assert_eq!(run(["frobnicate"]), 1);
    assert_eq!(run(["attack", "--no-such-flag"]), 1);
    // help is not an error
    assert_eq!(run(["--help"]), 0);
    assert_eq!(run(["gen-data", "--help"]), 0);
    // missing file is an io (runtime) error
    let m = mini();
    assert_eq!(
        run([
            "eval",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--delta",
            "/nonexistent/delta.flkp",
            "--out-dir",
            &p(&m.root.join("y")),
        ]),
        2
    );
    // invalid flag value is a validation error
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--mode",
            "sideways",
            "--out-dir",
            &p(&m.root.join("z")),
        ]),
        1
    );
}

#[test]
fn ota_sim_calibration_artifacts() {
    let m = mini();
    // attack first so a trace exists
    let out = m.root.join("atk");
    assert_eq!(
        run([
            "attack",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--mode",
            "universal",
            "--iterations",
            "20",
            "--eval-every",
            "10",
            "--out-dir",
            &p(&out),
            "--seed",
            "2",
        ]),
        0
    );
    // channel JSON with mild crosstalk
    let channel_path = m.root.join("channel.json");
    fs::write(
        &channel_path,
        r#"{
  "schema": "flicker/channel/v1",
  "crosstalk": [0.9, 0.05, 0.05, 0.05, 0.9, 0.05, 0.05, 0.05, 0.9],
  "rise_alpha": 0.7,
  "phase": 1,
  "ambient": [0.0, 0.0, 0.0],
  "noise_sigma": 0.01
}
"#,
    )
    .unwrap();
    let ota_dir = m.root.join("ota");
    assert_eq!(
        run([
            "ota-sim",
            "--model",
            &p(&m.model),
            "--data",
            &p(&m.data),
            "--delta",
            &p(&out.join("delta.flkp")),
            "--channel",
            &p(&channel_path),
            "--precompensate",
            "--emit-calibration",
            "--out-dir",
            &p(&ota_dir),
            "--seed",
            "8",
        ]),
        0
    );
    let calib = fs::read_to_string(ota_dir.join("calibration.csv")).unwrap();
    assert!(calib.starts_with("record,frame,sent_r,sent_g,sent_b,observed_r,observed_g,observed_b"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ota_dir.join("calibrated.json")).unwrap())
            .unwrap();
    // the recovered chromatic map matches the channel file
    let m00 = doc["estimate"]["crosstalk"][0].as_f64().unwrap();
    assert!((m00 - 0.9).abs() < 1e-6);
    assert!(ota_dir.join("ota_report.json").exists());
}

#[test]
fn transfer_matrix_contract() {
    let m = mini();
    let model_b = m.root.join("model_b.flkm");
    assert_eq!(
        run([
            "train",
            "--data",
            &p(&m.data),
            "--out",
            &p(&model_b),
            "--arch",
            "b",
            "--epochs",
            "15",
            "--batch-size",
            "4",
            "--seed",
            "4",
        ]),
        0
    );
    for (model, dir, seed) in [(&m.model, "ta", "1"), (&model_b, "tb", "2")] {
        assert_eq!(
            run([
                "attack",
                "--model",
                &p(model),
                "--data",
                &p(&m.data),
                "--mode",
                "universal",
                "--iterations",
                "30",
                "--eval-every",
                "10",
                "--learning-rate",
                "0.01",
                "--out-dir",
                &p(&m.root.join(dir)),
                "--seed",
                seed,
            ]),
            0
        );
    }
    let out = m.root.join("transfer");
    let models = format!("{},{}", p(&m.model), p(&model_b));
    let deltas = format!(
        "{},{}",
        p(&m.root.join("ta/delta.flkp")),
        p(&m.root.join("tb/delta.flkp"))
    );
    assert_eq!(
        run([
            "transfer-matrix",
            "--models",
            &models,
            "--deltas",
            &deltas,
            "--data",
            &p(&m.data),
            "--out-dir",
            &p(&out),
            "--seed",
            "0",
        ]),
        0
    );
    let csv = fs::read_to_string(out.join("matrix.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta_from\\target,model_a,model_b");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("model_a,"));
    assert!(lines[2].starts_with("model_b,"));

    // report consumes the matrix under --kind transfer only
    let rep = m.root.join("trep");
    assert_eq!(
        run([
            "report",
            "--kind",
            "transfer",
            "--inputs",
            &p(&out.join("transfer.json")),
            "--out-dir",
            &p(&rep),
        ]),
        0
    );
    let report = fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5); // header + 2x2 cells
    assert_eq!(
        run([
            "report",
            "--kind",
            "universal",
            "--inputs",
            &p(&out.join("transfer.json")),
            "--out-dir",
            &p(&m.root.join("trep2")),
        ]),
        1
    );
}
