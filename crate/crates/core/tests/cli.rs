use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sparc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparc")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("store");
    let o = sparc(&[
        "synth-gen", "--out", p(&out), "--n-samples", "600", "--stream-dims", "8,12",
        "--true-latents", "16", "--true-sparsity", "2", "--n-label-classes", "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json")
}

fn train(manifest: &Path, run: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--store", p(manifest), "--out", p(run), "--L", "32", "--k", "4", "--epochs", "2", "--batch-size", "50"];
    args.extend_from_slice(extra);
    sparc(&args)
}

#[test]
fn train_writes_checkpoint_metrics_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let run = dir.path().join("run");
    let o = train(&manifest, &run, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.json", "metrics.csv", "effective_config.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let eff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(eff["L"], 32);
    assert_eq!(eff["k"], 4);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"L": 64, "k": 8, "lambda": 0.25}"#).unwrap();
    let run = dir.path().join("run");
    let o = sparc(&["train", "--store", p(&manifest), "--out", p(&run), "--config", p(&cfg), "--k", "3", "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(eff["L"], 64);
    assert_eq!(eff["k"], 3);
    assert_eq!(eff["lambda"], 0.25);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&sparc(&["train", "--out", "/tmp/x"])), 1);
    assert_eq!(code(&sparc(&["no-such-command"])), 1);
    assert_eq!(code(&sparc(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"not_a_key": 1}"#).unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&sparc(&["train", "--store", p(&manifest), "--out", p(&run), "--config", p(&cfg)])), 2);
    assert_eq!(code(&sparc(&["train", "--store", p(&dir.path().join("missing.json")), "--out", p(&run)])), 2);

    assert_eq!(code(&train(&manifest, &run, &["--mode", "global"])), 0);
    let o = sparc(&["eval-patterns", "--checkpoint", p(&run), "--store", p(&manifest), "--mode", "local"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn non_finite_features_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let store = manifest.parent().unwrap();
    let bin = std::fs::read_dir(store)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| f.extension().is_some_and(|x| x == "bin"))
        .unwrap();
    let mut bytes = std::fs::read(&bin).unwrap();
    for v in bytes[16..].chunks_exact_mut(4) {
        v.copy_from_slice(&f32::NAN.to_le_bytes());
    }
    std::fs::write(&bin, bytes).unwrap();
    let o = train(&manifest, &dir.path().join("run"), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn evaluation_commands_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&train(&manifest, &run, &[])), 0);
    let eval = dir.path().join("eval");
    let common = ["--checkpoint", p(&run), "--store", p(&manifest), "--out", p(&eval)];
    for (cmd, extra) in [
        ("eval-alignment", vec!["--depth", "0"]),
        ("eval-patterns", vec![]),
        ("eval-retrieval", vec![]),
        ("eval-probes", vec![]),
    ] {
        let mut args = vec![cmd];
        args.extend_from_slice(&common);
        args.extend(extra);
        let o = sparc(&args);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let csvs: Vec<_> = std::fs::read_dir(&eval)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.extension().is_some_and(|x| x == "csv"))
        .collect();
    assert!(csvs.len() >= 4, "{csvs:?}");
    assert!(eval.join("effective_config.json").is_file());
}

#[test]
fn inspect_reports_no_warnings_for_clean_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&train(&manifest, &run, &[])), 0);
    let o = sparc(&["inspect", "--store", p(&manifest), "--checkpoint", p(&run)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("warnings: 0"));
}
