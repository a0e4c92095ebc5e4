//! Integration tests for the `reach` binary: artifact round-trips, config
//! hash stability, determinism, and thread-cap handling.

use reachtube::harness::{RunConfig, TubeArtifact};
use std::path::{Path, PathBuf};
use std::process::Command;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn reach() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reach"))
}

const TOY: &str = r#"
[model]
name = "linear"

[model.params]
A = [[0.0, 0.0], [0.0, 0.0]]
c = [0.0, 0.0]

[initial_set]
x0 = [0.0, 0.0]
delta0 = 0.1

[engine]
kind = "gotube"
time_horizon = 0.5
dt = 0.1
seed = 7
mu = 2.0
gamma = 0.05
batch_size = 16
max_samples = 1024

[output]
name = "toy"
"#;

fn write_toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.toml");
    std::fs::write(&path, TOY).unwrap();
    path
}

#[test]
fn gotube_zero_field_radius_is_mu_delta0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path());
    let out = reach()
        .args(["gotube", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let artifact = TubeArtifact::read(&dir.path().join("toy.tube")).unwrap();
    assert_eq!(artifact.steps.len(), 5);
    for step in &artifact.steps {
        match step {
            reachtube::harness::StepRecord::Stochastic(r) => {
                assert!((r.radius - 0.2).abs() < 1e-12, "radius {}", r.radius);
            }
            _ => panic!("expected stochastic records"),
        }
    }
}

#[test]
fn run_audit_compare_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lrtng_cfg = repo_root().join("configs/brusselator_lrtng.toml");
    let gotube_cfg = repo_root().join("configs/brusselator_gotube.toml");
    for (sub, cfg) in [("lrtng", &lrtng_cfg), ("gotube", &gotube_cfg)] {
        let out = reach()
            .args([sub, "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let lrtng_tube = dir.path().join("brusselator_lrtng.tube");
    let gotube_tube = dir.path().join("brusselator_gotube.tube");

    // Audit is clean and exits zero.
    let out = reach()
        .args(["audit", "--config"])
        .arg(&lrtng_cfg)
        .arg("--tube")
        .arg(&lrtng_tube)
        .args(["--trials", "500"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 violation(s)"));

    // Compare reports the statistical tube as smaller at these settings.
    let out = reach()
        .arg("compare")
        .arg(&lrtng_tube)
        .arg(&gotube_tube)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("lrtng") && text.contains("gotube"));

    // Plot writes an SVG.
    let svg = dir.path().join("tube.svg");
    let out = reach()
        .args(["plot", "--tube"])
        .arg(&lrtng_tube)
        .args(["--dims", "0,1", "--overlay-samples", "10", "--config"])
        .arg(&lrtng_cfg)
        .arg("--out")
        .arg(&svg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(&svg).unwrap();
    assert!(body.starts_with("<svg") && body.trim_end().ends_with("</svg>"));

    // The .summary sidecar and CSV exist next to the tube.
    assert!(dir.path().join("brusselator_lrtng.summary").exists());
    assert!(dir.path().join("brusselator_lrtng.csv").exists());
}

#[test]
fn compare_refuses_mismatched_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_a = write_toy(dir.path());
    let text_b = TOY.replace("delta0 = 0.1", "delta0 = 0.2");
    let cfg_b = dir.path().join("toy_b.toml");
    std::fs::write(&cfg_b, text_b).unwrap();
    for (cfg, out_name) in [(&cfg_a, "a"), (&cfg_b, "b")] {
        let out_dir = dir.path().join(out_name);
        let out = reach()
            .args(["gotube", "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let out = reach()
        .arg("compare")
        .arg(dir.path().join("a/toy.tube"))
        .arg(dir.path().join("b/toy.tube"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("different setting"), "stderr: {err}");
    // The refusal diff names both settings, which differ in the radius.
    assert!(err.contains("0.1") && err.contains("0.2"), "stderr: {err}");
}

#[test]
fn config_hash_ignores_key_order_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = RunConfig::from_str_at(TOY, dir.path()).unwrap();

    // Permute key order within sections and change the output name.
    let permuted = r#"
[output]
name = "renamed"

[engine]
max_samples = 1024
batch_size = 16
gamma = 0.05
mu = 2.0
seed = 7
dt = 0.1
time_horizon = 0.5
kind = "gotube"

[initial_set]
delta0 = 0.1
x0 = [0.0, 0.0]

[model]
name = "linear"

[model.params]
c = [0.0, 0.0]
A = [[0.0, 0.0], [0.0, 0.0]]
"#;
    let b = RunConfig::from_str_at(permuted, dir.path()).unwrap();
    assert_eq!(a.config_hash(), b.config_hash());

    // A semantic change does alter the hash.
    let c = RunConfig::from_str_at(&TOY.replace("mu = 2.0", "mu = 2.5"), dir.path()).unwrap();
    assert_ne!(a.config_hash(), c.config_hash());
}

#[test]
fn cli_runs_are_deterministic_and_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path());
    let mut tubes = Vec::new();
    for (sub_dir, threads) in [("r1", None), ("r2", None), ("r3", Some("1"))] {
        let out_dir = dir.path().join(sub_dir);
        let mut cmd = reach();
        cmd.args(["gotube", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir);
        if let Some(t) = threads {
            cmd.env("REACH_THREADS", t);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        tubes.push(std::fs::read(out_dir.join("toy.tube")).unwrap());
    }
    // The .tube step stream excludes wall-clock fields and must be
    // byte-identical across repeats and thread counts.
    assert_eq!(tubes[0], tubes[1]);
    assert_eq!(tubes[0], tubes[2]);
}

#[test]
fn seed_override_changes_the_artifact_hash_matches_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path());
    for (sub_dir, seed) in [("s7", None), ("s8", Some("8"))] {
        let out_dir = dir.path().join(sub_dir);
        let mut cmd = reach();
        cmd.args(["gotube", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir);
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
    }
    let a = TubeArtifact::read(&dir.path().join("s7/toy.tube")).unwrap();
    let b = TubeArtifact::read(&dir.path().join("s8/toy.tube")).unwrap();
    assert_eq!(a.metadata.seed, 7);
    assert_eq!(b.metadata.seed, 8);
    // Different seed => different config hash, and audits must refuse the
    // mismatched pairing.
    assert_ne!(a.metadata.config_hash, b.metadata.config_hash);
    let out = reach()
        .args(["audit", "--config"])
        .arg(&cfg)
        .arg("--tube")
        .arg(dir.path().join("s8/toy.tube"))
        .args(["--trials", "10"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn blowup_exits_nonzero_with_partial_artifact() {
    // Exponential growth fast enough to overflow the enclosure before the
    // horizon: x' = 40 x on a wide initial box.
    let text = r#"
[model]
name = "vanderpol"

[initial_set]
x0 = [2.0, 0.0]
delta0 = 0.05

[engine]
kind = "lrtng"
time_horizon = 5.0
dt = 0.05

[output]
name = "vdp"
"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vdp.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = reach()
        .args(["lrtng", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blowup"));
    let artifact = TubeArtifact::read(&dir.path().join("vdp.tube")).unwrap();
    assert!(artifact.metadata.blowup_time.is_some());
    assert!(!artifact.steps.is_empty());
    assert!(artifact.metadata.final_time < 5.0);
}
