//! Drives the `recmia` binary end to end on a toy configuration.

use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = "\
setting = SITL
k = 10
lfm.embed = 16
lfm.epochs = 15
generator.embed = 16
generator.epochs = 15
dataset.S.users = 240
dataset.S.items = 60
dataset.S.density = 0.15
dataset.T.users = 240
dataset.T.items = 60
dataset.T.density = 0.15
dataset.T.popularity_skew = 0.5
attack.d_inv = 4
attack.m = 4
attack.decoder_hidden = 16
attack.attack_hidden = 8
attack.pretrain_epochs = 20
attack.epoch_out = 2
attack.epoch_in = 3
";

fn recmia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recmia")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("toy.conf");
    std::fs::write(&path, TOY).unwrap();
    path.display().to_string()
}

#[test]
fn stage_commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();

    let v = ok(&recmia(&["prepare-data", "--config", &conf, "--seed", "3", "--out-dir", o]));
    assert!(v["users"].as_u64().unwrap() > 0);
    for f in ["shadow.csv", "target.csv", "extraction.csv", "bundle.json"] {
        assert!(out.join("splits").join(f).is_file(), "{f}");
    }

    let v = ok(&recmia(&["train-rec", "--config", &conf, "--seed", "3", "--out-dir", o]));
    assert_eq!(v["shadow"]["algorithm"], "item_base");
    assert!(v["target"]["train_rmse"].as_f64().unwrap() > 0.0);
    assert!(out.join("recommenders/target.ckpt").is_file());

    let v = ok(&recmia(&["gen-vectors", "--config", &conf, "--seed", "3", "--out-dir", o]));
    assert_eq!(v["dim"], 16);
    let header = std::fs::read_to_string(out.join("vectors/shadow.csv")).unwrap();
    assert!(header.starts_with("user_id,origin,label,diff0,"));

    let vectors = out.join("vectors");
    let from_files = ok(&recmia(&[
        "attack", "--config", &conf, "--seed", "3", "--out-dir", o, "--method", "biased", "--vectors", vectors.to_str().unwrap(),
    ]));
    let in_memory = ok(&recmia(&["attack", "--config", &conf, "--seed", "3", "--out-dir", o, "--method", "biased"]));
    assert_eq!(from_files["target_auc"], in_memory["target_auc"]);
    assert!(out.join("attack/biased/metrics.jsonl").is_file());
    assert!(out.join("timing.json").is_file());
}

#[test]
fn run_experiment_is_reproducible_and_seed_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let v = ok(&recmia(&["run-experiment", "--config", &conf, "--seed", seed, "--out-dir", out.to_str().unwrap()]));
        (v, std::fs::read(out.join("report.json")).unwrap())
    };
    let (va, a) = run("a", "7");
    let (_, b) = run("b", "7");
    let (_, c) = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    for key in ["biased_auc", "dlmia_auc", "pretrain_auc"] {
        let auc = va[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc), "{key}");
    }
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["config"]["seed"], "7");
    assert_eq!(report["setting"], "SITL");
}

#[test]
fn defense_flag_reaches_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let out = dir.path().join("d");
    ok(&recmia(&["run-experiment", "--config", &conf, "--defense", "--out-dir", out.to_str().unwrap()]));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["defense"], "true");
}

#[test]
fn bad_configs_fail_with_the_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "seed = 1\nsetting = LN\n").unwrap();
    let out = recmia(&["prepare-data", "--config", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("`N`"), "{err}");
}

#[test]
fn verify_passes_clean_and_fails_with_an_injected_fault() {
    let clean = recmia(&["verify"]);
    let table = String::from_utf8_lossy(&clean.stdout);
    assert!(clean.status.success(), "{table}");
    assert!(table.contains("PASS") && !table.contains("FAIL"));

    let broken = recmia(&["verify", "--inject-fault", "kl-sign-flip"]);
    assert!(!broken.status.success());
    let table = String::from_utf8_lossy(&broken.stdout);
    assert!(table.lines().any(|l| l.starts_with("kl_vmf") && l.contains("FAIL")), "{table}");
}
