use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vieta_core::walk::TrajectoryRecord;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vieta"));
    c.env_remove("VIETA_POLICY");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(experiment: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(experiment).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().expect("spawn")
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn walk_on_the_seven_point_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("walk", &configs().join("walk_boalch_klein.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("distinct visited points: 7"), "{summary}");

    let m = manifest(dir.path());
    assert_eq!(m["status"], "passed");
    assert_eq!(m["config"]["seeds"], serde_json::json!([0]));
    assert_eq!(m["config"]["thin"], 1);
    for f in m["files"].as_array().unwrap() {
        let path = dir.path().join(f["path"].as_str().unwrap());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.len() as u64, f["bytes"].as_u64().unwrap());
        for line in text.lines() {
            let r: TrajectoryRecord = serde_json::from_str(line).unwrap();
            assert_eq!(r.steps, 1000);
        }
    }
}

#[test]
fn artifacts_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("walk_escape.toml");
    for d in [&a, &b] {
        assert_eq!(run("walk", &cfg, d.path(), &[]).status.code(), Some(0));
    }
    for name in ["trajectories.jsonl", "certificates.jsonl", "summary.txt"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma["files"], mb["files"]);
}

#[test]
fn seed_flag_and_policy_file() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("policy.toml");
    std::fs::write(&policy, "escape_radius = 1e6\n").unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .env("VIETA_POLICY", &policy)
        .args(["walk", "--config"])
        .arg(configs().join("walk_boalch_klein.toml"))
        .arg("--out")
        .arg(&out)
        .args(["--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m["config"]["seeds"], serde_json::json!([9]));
    assert_eq!(m["config"]["policy"]["escape_radius"], 1e6);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "params = [1, 1, 1, 0]\nstart = [0, 0, 0]\nmu = [1, -1, 1]\n").unwrap();
    let o = run("walk", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("mu"), "{err}");

    std::fs::write(&cfg, "start = [0, 0, 0]\nwalkers = 3\n").unwrap();
    let o = run("walk", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("walkers"));

    let o = run("walk", &dir.path().join("missing.toml"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_assertions_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("orbit.toml");
    std::fs::write(&cfg, "params = [0, 0, 0, 4]\nstart = [1, 1, 1]\nexact = true\nexpect_size = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = run("orbit", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    let orbit: Value = serde_json::from_str(&std::fs::read_to_string(out.join("orbit.json")).unwrap()).unwrap();
    assert_eq!(orbit["points"].as_array().unwrap().len(), 4);
    assert_eq!(orbit["points"][0], serde_json::json!(["1", "1", "1"]));
}

#[test]
fn committed_quick_configs_pass() {
    for (exp, name) in [
        ("orbit", "orbit_cayley_exact.toml"),
        ("orbit", "orbit_generic.toml"),
        ("catalog-check", "catalog_check.toml"),
        ("boundary", "boundary.toml"),
        ("infinity-verify", "infinity_verify.toml"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(exp, &configs().join(name), dir.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stdout));
        if exp == "infinity-verify" {
            let s = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
            assert!(s.contains("0 violations"), "{s}");
        }
    }
}
