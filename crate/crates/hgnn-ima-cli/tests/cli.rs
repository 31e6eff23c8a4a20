//! End-to-end CLI tests: exit codes, artifacts, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hgnn-ima"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hgnn-ima")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Fast training config for smoke tests.
fn quick_set(cmd: &mut Command) -> &mut Command {
    cmd.args([
        "--set",
        "layers=2",
        "--set",
        "hidden_dim=8",
        "--set",
        "heads=2",
        "--set",
        "dropout=0.0",
        "--set",
        "max_iterations=8",
    ])
}

#[test]
fn synth_then_train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run(&[
        "synth",
        "--spec",
        "small",
        "--seed",
        "1",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let manifest = data.join("manifest.json");
    assert!(manifest.exists());

    let run_dir = dir.path().join("run1");
    let mut cmd = bin();
    cmd.args([
        "train",
        "--data",
        manifest.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    quick_set(&mut cmd);
    let out = cmd.output().unwrap();
    assert_exit(&out, 0);
    for artifact in [
        "checkpoint.json",
        "report.json",
        "effective_config.json",
        "modelcard.json",
        "metrics.tsv",
        "run.log",
    ] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }
    let metrics = String::from_utf8(out.stdout).unwrap();
    assert!(metrics.starts_with("split\t"), "{metrics}");

    // eval twice gives byte-identical TSV.
    let ckpt = run_dir.join("checkpoint.json");
    let eval_args = [
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        manifest.to_str().unwrap(),
    ];
    let a = run(&eval_args);
    let b = run(&eval_args);
    assert_exit(&a, 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn train_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &run(&["synth", "--spec", "small", "--seed", "2", "--out", data.to_str().unwrap()]),
        0,
    );
    let manifest = data.join("manifest.json");
    let run_once = |name: &str| {
        let out_dir = dir.path().join(name);
        let mut cmd = bin();
        cmd.args([
            "train",
            "--data",
            manifest.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        quick_set(&mut cmd);
        assert_exit(&cmd.output().unwrap(), 0);
        out_dir
    };
    let d1 = run_once("a");
    let d2 = run_once("b");
    for artifact in ["checkpoint.json", "report.json", "effective_config.json"] {
        let x = fs::read(d1.join(artifact)).unwrap();
        let y = fs::read(d2.join(artifact)).unwrap();
        assert_eq!(x, y, "{artifact} differs between reruns");
    }
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d1 = dir.path().join("x");
    let d2 = dir.path().join("y");
    for d in [&d1, &d2] {
        assert_exit(
            &run(&["synth", "--spec", "small", "--seed", "9", "--out", d.to_str().unwrap()]),
            0,
        );
    }
    for entry in fs::read_dir(&d1).unwrap() {
        let name = entry.unwrap().file_name();
        let x = fs::read(d1.join(&name)).unwrap();
        let y = fs::read(d2.join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
}

#[test]
fn unknown_override_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--data",
        "nowhere.json",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "bogus_key=1",
    ]);
    assert_exit(&out, 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("ERROR CONFIG:"), "{err}");
    assert!(err.contains("bogus_key"), "{err}");
}

#[test]
fn missing_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--data",
        "does-not-exist.json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("ERROR IO:"));
}

#[test]
fn ablate_unknown_variant_exits_2() {
    let out = run(&["ablate", "--data", "x.json", "--variant", "bogus"]);
    assert_exit(&out, 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn ablate_two_variants_shared_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &run(&["synth", "--spec", "small", "--seed", "4", "--out", data.to_str().unwrap()]),
        0,
    );
    let mut cmd = bin();
    cmd.args([
        "ablate",
        "--data",
        data.join("manifest.json").to_str().unwrap(),
        "--variant",
        "full",
        "--variant",
        "-Latt",
        "--seeds",
        "1",
    ]);
    quick_set(&mut cmd);
    let out = cmd.output().unwrap();
    assert_exit(&out, 0);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().count() >= 3, "{table}");
    assert!(table.contains("full\t") && table.contains("-Latt\t"), "{table}");
}

#[test]
fn gradcheck_passes_and_fault_injection_fails() {
    let ok = run(&["gradcheck"]);
    assert_exit(&ok, 0);
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.contains("PASS"), "{text}");

    let bad = run(&["gradcheck", "--inject-fault"]);
    assert_exit(&bad, 1);
    assert!(String::from_utf8(bad.stdout).unwrap().contains("FAIL"));

    let restricted = run(&["gradcheck", "--blocks", "w_modal"]);
    assert_exit(&restricted, 0);
    let text = String::from_utf8(restricted.stdout).unwrap();
    assert!(text.contains("w_modal"), "{text}");
    assert!(!text.contains("w_node."), "{text}");
}

#[test]
fn export_attention_writes_csv_and_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &run(&["synth", "--spec", "small", "--seed", "6", "--out", data.to_str().unwrap()]),
        0,
    );
    let manifest = data.join("manifest.json");
    let run_dir = dir.path().join("run");
    let mut cmd = bin();
    cmd.args([
        "train",
        "--data",
        manifest.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    quick_set(&mut cmd);
    assert_exit(&cmd.output().unwrap(), 0);

    let exp_dir = dir.path().join("export");
    let out = run(&[
        "export-attention",
        "--checkpoint",
        run_dir.join("checkpoint.json").to_str().unwrap(),
        "--data",
        manifest.to_str().unwrap(),
        "--layer",
        "1",
        "--out",
        exp_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(exp_dir.join("attention.csv").exists());
    assert!(exp_dir.join("embeddings.csv").exists());
    assert!(exp_dir.join("pair_analysis.tsv").exists());
    let head = fs::read_to_string(exp_dir.join("attention.csv")).unwrap();
    assert!(head.starts_with("layer,target,source,edge_type,head"), "{head}");
}

#[test]
fn probe_prints_scaling_table() {
    let out = run(&["probe", "--sizes", "small", "--seed", "1"]);
    assert_exit(&out, 0);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("nodes\tedges\tmodalities"), "{table}");
    assert!(table.contains("# edge exponent"), "{table}");
    assert!(table.contains("# modality ratio"), "{table}");
}

#[test]
fn eval_refuses_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data_a = dir.path().join("a");
    let data_b = dir.path().join("b");
    assert_exit(
        &run(&["synth", "--spec", "small", "--seed", "1", "--out", data_a.to_str().unwrap()]),
        0,
    );
    assert_exit(
        &run(&["synth", "--spec", "overfit", "--seed", "1", "--out", data_b.to_str().unwrap()]),
        0,
    );
    // Same schema: train on a, eval on b works. Now corrupt b's manifest to
    // a different category set and expect a schema error.
    let manifest_b = data_b.join("manifest.json");
    let text = fs::read_to_string(&manifest_b).unwrap();
    let text = text.replace("\"c0\"", "\"weird\"");
    let labels = data_b.join("labels.tsv");
    let ltext = fs::read_to_string(&labels).unwrap().replace("c0", "weird");
    fs::write(&labels, ltext).unwrap();
    fs::write(&manifest_b, text).unwrap();

    let run_dir = dir.path().join("run");
    let mut cmd = bin();
    cmd.args([
        "train",
        "--data",
        data_a.join("manifest.json").to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    quick_set(&mut cmd);
    assert_exit(&cmd.output().unwrap(), 0);

    let out = run(&[
        "eval",
        "--checkpoint",
        run_dir.join("checkpoint.json").to_str().unwrap(),
        "--data",
        manifest_b.to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("ERROR SCHEMA:"));
}

#[test]
fn config_file_precedence_below_cli_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, r#"{"layers": 4, "hidden_dim": 8, "heads": 2}"#).unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &run(&["synth", "--spec", "small", "--seed", "3", "--out", data.to_str().unwrap()]),
        0,
    );
    let run_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--data",
        data.join("manifest.json").to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--set",
        "layers=1",
        "--set",
        "dropout=0.0",
        "--set",
        "max_iterations=3",
    ]);
    assert_exit(&out, 0);
    let effective: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("effective_config.json")).unwrap())
            .unwrap();
    assert_eq!(effective["layers"], 1, "override wins over file");
    assert_eq!(effective["hidden_dim"], 8, "file wins over default");
}

#[test]
fn shipped_default_config_parses_and_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let text = fs::read_to_string(path).unwrap();
    let parsed: hgnn_ima::trainer::RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, hgnn_ima::trainer::RunConfig::default());
}
