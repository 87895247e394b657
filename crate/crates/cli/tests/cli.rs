use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_harnack-lab");

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const FLAT: &str = r#"
[geometry]
kind = "flat_torus"
resolution = 32

[flow]
horizon = 0.3

[terminal]
profile = "cosine"
tau1 = 0.1
"#;

#[test]
fn identities_pass_and_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out = dir.path().join("out");
    let status = Command::new(BIN)
        .args(["verify-identities", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("status: PASS"));
    assert!(summary.contains("[identities] PASS"));
    assert!(!summary.contains("[harnack]"));
    for f in [
        "trajectory.csv",
        "solution.csv",
        "calibration.toml",
        "identities_lemma.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn env_var_sets_default_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out = dir.path().join("from-env");
    let status = Command::new(BIN)
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("HARNACK_LAB_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("trajectory.csv").exists());
    assert!(out.join("summary.txt").exists());
}

#[test]
fn invalid_config_lists_violations_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{FLAT}\n[localization]\nrho = 1.0\ndelta = 0.25\n");
    let cfg = write_config(dir.path(), &body);
    let output = Command::new(BIN)
        .args(["localize", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .arg("--resolution")
        .arg("4")
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("delta < 1/(4n)"), "{err}");
    assert!(err.contains("resolution"), "{err}");
}

#[test]
fn failing_tolerance_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let body = FLAT.replace(
        "tau1 = 0.1",
        "tau1 = 0.1\n[checks]\nselect = [\"identities\"]\ntolerance = 1e-9",
    );
    let cfg = write_config(dir.path(), &body);
    let output = Command::new(BIN)
        .args(["report", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("status: FAIL"));
}

#[test]
fn calibrate_then_reuse_record_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out = dir.path().join("cal");
    let status = Command::new(BIN)
        .args(["calibrate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let record = out.join("calibration.toml");
    let body = FLAT.replace(
        "tau1 = 0.1",
        &format!(
            "tau1 = 0.1\n[checks]\nselect = [\"ratio\"]\ntolerance = {:?}",
            record.display().to_string()
        ),
    );
    let cfg = write_config(dir.path(), &body);
    let run = |out: &str| {
        let status = Command::new(BIN)
            .args(["ratio", "--seed", "11", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join(out).join("ratio.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
    let summary = std::fs::read_to_string(dir.path().join("a/summary.txt")).unwrap();
    assert!(summary.contains("source=calibration sha256:"));
    assert!(summary.contains("seed = 11"));
}
