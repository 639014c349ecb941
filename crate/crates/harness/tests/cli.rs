use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LIMIT: &str = r#"
experiment = "limit-law"
seed = 7
replicas = 100

[limit_law]
draws = 20000
psi_draws = 400
block_moves = 100000
block_runs = 1
"#;

const W_LAW: &str = r#"
experiment = "w-law"
seed = 3
replicas = 300

[w_law]
n = [100, 250]
block_moves = 50000
block_runs = 2
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn gwrw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwrw"))
        .args(args)
        .env_remove("GWRW_WORKERS")
        .output()
        .unwrap()
}

#[test]
fn passing_suite_exits_zero_and_writes_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "limit.toml", LIMIT);
    let out = dir.path().join("limit.csv");
    let o = gwrw(&[cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# schema: 1\n"));
    assert!(csv.contains("# suite: limit-law"));
    assert!(csv.contains("# checks_passed: true"));
    let model = fs::read_to_string(dir.path().join("limit.model.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&model).unwrap();
    assert_eq!(v["beta"], 5.0);
}

#[test]
fn failed_assertion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{LIMIT}mass_tolerance = 1e-15\n");
    let cfg = write(dir.path(), "strict.toml", &text);
    let o = gwrw(&[cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL density_mass_is_one"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("# checks_passed: false"));
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "unknown.toml",
        "experiment = \"scaling\"\nbogus = 1\n",
    );
    assert_eq!(gwrw(&[unknown.to_str().unwrap()]).status.code(), Some(1));
    let subcritical = write(
        dir.path(),
        "sub.toml",
        "experiment = \"scaling\"\nbeta = 2.0\n",
    );
    assert_eq!(
        gwrw(&[subcritical.to_str().unwrap()]).status.code(),
        Some(1)
    );
    let epsilon = write(
        dir.path(),
        "eps.toml",
        "experiment = \"scaling\"\nepsilon = 0.3\n",
    );
    assert_eq!(gwrw(&[epsilon.to_str().unwrap()]).status.code(), Some(1));
    let cfg = write(dir.path(), "w.toml", W_LAW);
    assert_eq!(
        gwrw(&[cfg.to_str().unwrap(), "--experiment", "nope"])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(gwrw(&[missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.toml", W_LAW);
    let a = gwrw(&[cfg.to_str().unwrap(), "--workers", "1"]);
    let b = gwrw(&[cfg.to_str().unwrap(), "--workers", "3"]);
    assert!(a.status.code().is_some_and(|c| c != 1));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let c = gwrw(&[cfg.to_str().unwrap(), "--workers", "2", "--seed", "4"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn zero_replicas_gives_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.toml", W_LAW);
    for suite in [
        "scaling",
        "subsequence",
        "trap-time",
        "w-law",
        "nonconvergence",
        "limit-law",
        "toy-iid",
    ] {
        let o = gwrw(&[
            cfg.to_str().unwrap(),
            "--experiment",
            suite,
            "--replicas",
            "0",
        ]);
        assert_eq!(o.status.code(), Some(0), "{suite}");
        let text = String::from_utf8(o.stdout).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(
            body,
            ["section,statistic,parameter,value,ci_low,ci_high,note"],
            "{suite}"
        );
    }
}
