use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use binverse::experiments::{run_experiment, ExperimentConfig};

const SMALL_LEVEL_SET: &str =
    "method = level_set\nn = 16\nn_truth = 32\nobs_per_axis = 4\nsteps = 3000\nalpha = 3\nprior_samples = 50\n";

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).unwrap();
        if name == "manifest.json" {
            let mut m: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            m.as_object_mut().unwrap().remove("wall_time");
            bytes = serde_json::to_vec(&m).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(SMALL_LEVEL_SET).unwrap();
    run_experiment(&cfg, &tmp.path().join("a")).unwrap();
    run_experiment(&cfg, &tmp.path().join("b")).unwrap();
    let a = artifacts(&tmp.path().join("a"));
    assert!(a.contains_key("perimeter_histogram.csv"));
    assert!(a.contains_key("diagnostics.csv"));
    assert_eq!(a, artifacts(&tmp.path().join("b")));
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for text in [
        "method = phase_field\nnoise = order_one\nn = 16\nn_truth = 32\nobs_per_axis = 4\nsteps = 2000\nseed = 7\n",
        "method = gp\nn = 16\nn_truth = 48\nobs_per_axis = 3\ngp_samples = 20\ndump_gram = true\ntruth = B\n",
    ] {
        let first = run_experiment(&ExperimentConfig::parse(text).unwrap(), &tmp.path().join("first")).unwrap();
        let replayed = ExperimentConfig::from_manifest(&first.manifest).unwrap();
        run_experiment(&replayed, &tmp.path().join("second")).unwrap();
        assert_eq!(artifacts(&tmp.path().join("first")), artifacts(&tmp.path().join("second")));
        std::fs::remove_dir_all(tmp.path().join("first")).unwrap();
        std::fs::remove_dir_all(tmp.path().join("second")).unwrap();
    }
}

#[test]
fn regimes_differ_only_in_noise_and_scalings() {
    let small = ExperimentConfig::parse("method = phase_field\nnoise = small").unwrap().prior;
    let order_one = ExperimentConfig::parse("method = phase_field\nnoise = order_one").unwrap().prior;
    assert_eq!(
        (small.q, small.tau, small.r, small.eps, small.alpha),
        (order_one.q, order_one.tau, order_one.r, order_one.eps, order_one.alpha)
    );
    assert_ne!((small.c, small.delta, small.a1, small.b), (order_one.c, order_one.delta, order_one.a1, order_one.b));
}

#[test]
fn failed_run_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no_such_truth.csv");
    let cfg = ExperimentConfig::parse(&format!("{SMALL_LEVEL_SET}truth = file:{}\n", missing.display())).unwrap();
    let dir = tmp.path().join("run");
    assert!(run_experiment(&cfg, &dir).is_err());
    assert!(!dir.exists());

    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join("notes.txt"), "keep").unwrap();
    assert!(run_experiment(&cfg, &dir).is_err());
    let left: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("notes.txt")]);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_binverse"))
}

#[test]
fn cli_honours_output_root_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("env_root");
    let status = cli()
        .current_dir(tmp.path())
        .env("BINVERSE_OUT", &root)
        .args(["sample-prior", "--n", "16", "--seed", "4", "--threshold"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(root.join("sample_prior").is_dir());
    assert!(!tmp.path().join("binverse_out").exists());
}

#[test]
fn cli_runs_config_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, SMALL_LEVEL_SET).unwrap();
    let out = cli()
        .args(["--out"])
        .arg(tmp.path())
        .args(["pcn-run", "--config"])
        .arg(&cfg)
        .args(["--set", "steps=1000", "--name", "ls"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("ls");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["steps"], "1000");

    let score = cli()
        .args(["score", "--recon"])
        .arg(run.join("truth.csv"))
        .arg("--truth")
        .arg(run.join("truth.csv"))
        .output()
        .unwrap();
    assert!(score.status.success());
    assert_eq!(String::from_utf8_lossy(&score.stdout).trim().parse::<f64>().unwrap(), 1.0);
}

#[test]
fn cli_rejects_bad_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, SMALL_LEVEL_SET).unwrap();
    let out = cli()
        .args(["--out"])
        .arg(tmp.path())
        .args(["pcn-run", "--config"])
        .arg(&cfg)
        .args(["--set", "colour=blue"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}
