use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kinetic_qsd::io::{config_hash, emit_csv, RunStamp};
use kinetic_qsd::{load_config, Error, Reference, RunConfig};

fn kqsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kqsd")).args(args).output().expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, config: &RunConfig) -> String {
    let path = dir.join(name);
    std::fs::write(&path, config.to_toml()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn shipped_configs_load() {
    let mut seen = 0;
    for dir in [configs_dir(), configs_dir().join("reference")] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                seen += 1;
            }
        }
    }
    assert!(seen >= 9);
    let r1 = load_config(configs_dir().join("reference/r1.toml")).unwrap();
    assert_eq!(r1, Reference::R1.config());
}

#[test]
fn missing_file_names_its_path() {
    match load_config("/nonexistent/run.toml") {
        Err(Error::Io { path, .. }) => assert_eq!(path, Path::new("/nonexistent/run.toml")),
        other => panic!("unexpected {other:?}"),
    }
    let out = kqsd(&["spectral", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn invalid_value_reported_with_key_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[domain]\ntype = \"interval\"\na = 0.0\nb = 1.0\n[model]\ngamma = 1.0\nsigma = 1.0\n[integrator]\ndt = -1.0\n").unwrap();
    let out = kqsd(&["simulate", "--config", path.to_str().unwrap(), "--samples", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrator.dt"));
}

#[test]
fn csv_output_is_byte_stable_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Reference::R3.config();
    config.integrator.t_max = 2.0;
    let cfg = write_config(dir.path(), "sim.toml", &config);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = kqsd(&["simulate", "--config", &cfg, "--samples", "3000", "--threads", threads, "-o", out.to_str().unwrap()]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, format!("# config_sha256={} seed={}", config_hash(&config), config.seed));
    assert_eq!(text.lines().count(), 3002);
}

#[test]
fn csv_rejects_nan_and_writes_header_only_when_empty() {
    let stamp = RunStamp::of(&Reference::R1.config());
    let mut out = Vec::new();
    assert!(matches!(emit_csv(&mut out, &stamp, &["x"], &[vec![f64::NAN]]), Err(Error::NonFinite(_))));
    assert!(out.is_empty());
    emit_csv(&mut out, &stamp, &["x", "y"], &[]).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
}

fn strip_timing(mut v: serde_json::Value) -> serde_json::Value {
    for r in v.as_array_mut().unwrap() {
        r.as_object_mut().unwrap().remove("elapsed_s");
    }
    v
}

#[test]
fn verify_is_reproducible_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Reference::R1.config();
    config.spectral.dense_n = 16;
    let cfg = write_config(dir.path(), "verify.toml", &config);
    let run = |threads: &str| {
        let out = kqsd(&["verify", "--suite", "longtime", "--config", &cfg, "--seed", "5", "--threads", threads]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        strip_timing(serde_json::from_slice(&out.stdout).unwrap())
    };
    let first = run("1");
    assert_eq!(first, run("2"));
    let reports = first.as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["name"], "longtime");
    assert_eq!(reports[0]["seed"].as_u64(), Some(kinetic_qsd::rng::derive_seed(5, "longtime")));
}

#[test]
fn failing_check_gives_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Reference::R1.config();
    config.verify.duality_levels = vec![8, 16];
    config.verify.duality_tol = 1e-9;
    config.verify.samples = 2000;
    let cfg = write_config(dir.path(), "strict.toml", &config);
    let out = kqsd(&["verify", "--suite", "duality", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["status"], "fail");
}
