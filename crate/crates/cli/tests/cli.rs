use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaussdiff"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn cloud(dir: &Path) {
    ok(dir, &["gen-synthetic", "--kind", "gaussian", "--d", "6", "--n", "120", "--seed", "3", "--rank", "3", "--out", "c.bin"]);
}

#[test]
fn curves_gain_is_one_for_unit_lambda() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["curves", "--schedule", "vp:0.1:20:1", "--lambdas", "1", "--n-t", "201", "--out", "c.csv"]);
    let gain = column(&dir.path().join("c.csv"), "gain");
    assert_eq!(gain.len(), 201);
    assert!(gain.iter().all(|g| (g - 1.0).abs() < 1e-12));
    assert!(dir.path().join("c.csv.meta.json").exists());
}

#[test]
fn heun_sample_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud(d);
    ok(d, &["sample", "--model", "gaussian:c.bin", "--grid", "0.002:80:7:400", "--n", "3", "--seed", "9", "--out", "h"]);
    let stdout = ok(d, &["compare", "--traj", "h", "--closed-form", "gaussian:c.bin", "--out", "dev.csv"]);
    assert!(stdout.contains("max mse"));
    let mse = column(&d.join("dev.csv"), "mean");
    assert_eq!(mse.len(), 400);
    assert!(mse.iter().all(|m| *m < 1e-8), "max {}", mse.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn ddim_trajectory_matches_vp_closed_form_loosely() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud(d);
    ok(d, &["sample", "--model", "gaussian:c.bin", "--sampler", "ddim", "--schedule", "vp", "--steps", "400", "--out", "v"]);
    ok(d, &["compare", "--traj", "v/traj_00000.csv", "--closed-form", "gaussian:c.bin", "--schedule", "vp", "--out", "dev.csv"]);
    let mse = column(&d.join("dev.csv"), "mse");
    assert!(mse[0] < 1e-20 && mse.iter().all(|m| *m < 1e-3));
}

#[test]
fn teleport_at_sigma_max_equals_plain_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud(d);
    ok(d, &["sample", "--model", "delta:c.bin", "--n", "2", "--seed", "4", "--out", "a"]);
    ok(d, &["teleport", "--model", "delta:c.bin", "--cloud", "c.bin", "--skip", "80", "--n", "2", "--seed", "4", "--out", "b"]);
    for f in ["traj_00000.csv", "traj_00001.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap());
    }
    ok(d, &["teleport", "--model", "delta:c.bin", "--cloud", "c.bin", "--skip", "5", "--skip-mode", "regrid", "--out", "r"]);
    let sigma = column(&d.join("r/traj_00000.csv"), "sigma");
    assert!((sigma[0] - 5.0).abs() < 1e-12);
}

#[test]
fn outputs_are_reproducible_and_independent_of_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud(d);
    ok(d, &["sample", "--model", "delta:c.bin", "--sampler", "rk4", "--n", "2", "--seed", "1", "--out", "a"]);
    let out = bin()
        .current_dir(d)
        .env("GSL_THREADS", "1")
        .args(["sample", "--model", "delta:c.bin", "--sampler", "rk4", "--n", "5", "--seed", "1", "--out", "b"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(d.join("a/traj_00001.csv")).unwrap(), fs::read(d.join("b/traj_00001.csv")).unwrap());
    ok(d, &["sample", "--model", "delta:c.bin", "--sampler", "rk4", "--n", "2", "--seed", "2", "--out", "c"]);
    assert_ne!(fs::read(d.join("a/traj_00000.csv")).unwrap(), fs::read(d.join("c/traj_00000.csv")).unwrap());
}

#[test]
fn sidecar_replays_the_invocation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cloud(d);
    ok(d, &["fit-gmm", "--input", "c.bin", "--k", "3", "--rank", "2", "--seed", "8", "--out", "m.json"]);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "fit-gmm");
    assert_eq!(meta["params"]["k"], 3);
    assert_eq!(meta["info"]["K"], 3);
    ok(d, &["fit-gmm", "--config", "m.json.meta.json", "--out", "m2.json"]);
    assert_eq!(fs::read(d.join("m.json")).unwrap(), fs::read(d.join("m2.json")).unwrap());
}

#[test]
fn config_values_yield_to_explicit_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"lambdas": [1, 25], "n_t": 11, "out": "from_config.csv"}"#).unwrap();
    ok(d, &["curves", "--config", "cfg.json", "--n-t", "21"]);
    let t = column(&d.join("from_config.csv"), "t");
    assert_eq!(t.len(), 42);
    fs::write(d.join("bad.json"), r#"{"no_such_flag": 1}"#).unwrap();
    assert_eq!(run(d, &["curves", "--config", "bad.json", "--lambdas", "1", "--out", "x.csv"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["sample", "--nonsense"]).status.code(), Some(2));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(d, &["fit-gmm", "--input", "c.bin"]).status.code(), Some(2));
    let out = run(d, &["fit-gmm", "--input", "missing.csv", "--k", "2", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    let out = bin()
        .current_dir(d)
        .env("GSL_THREADS", "0")
        .args(["curves", "--lambdas", "1", "--out", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_slice_and_bimodal_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-synthetic", "--kind", "gmm", "--d", "5", "--n", "150", "--clusters", "3", "--rank", "2", "--noise", "0.05", "--out", "g.bin"]);
    ok(d, &["sweep", "--cloud", "g.bin", "--k-list", "1,3", "--rank-list", "0,2", "--sigmas", "1,5", "--probes", "50", "--out", "s.csv"]);
    assert_eq!(column(&d.join("s.csv"), "mean").len(), 8);
    assert_eq!(column(&d.join("s.minrank.csv"), "minimal_rank").len(), 4);

    fs::write(d.join("a.csv"), "1,0,0,0,0\n0,1,0,0,0\n0,0,1,0,0\n").unwrap();
    ok(d, &["slice", "--models", "delta:g.bin,gaussian:g.bin", "--anchors", "a.csv", "--sigma", "1", "--grid-n", "6", "--extent", "2", "--out", "sl"]);
    for f in ["field_0.csv", "field_1.csv", "plane.json"] {
        assert!(d.join("sl").join(f).exists());
    }
    assert_eq!(column(&d.join("sl/field_1.csv"), "norm").len(), 36);

    let out = run(d, &["bimodal", "--m", "1", "--q", "0.2", "--dims", "1,16", "--sigmas", "0.5,2", "--out", "b.csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverges"));
    let e = column(&d.join("b.csv"), "error");
    assert_eq!(e.len(), 4);
    assert!(e[3] < e[2]);
}
