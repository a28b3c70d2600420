use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(job: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lefschetz"))
        .arg(job)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn verify_local_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("verify-local", &fixture("rp2.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(dir.path());
    assert_eq!(r["pass"], true);
    assert_eq!(r["sections"].as_array().unwrap().len(), 7);
}

#[test]
fn homology_check_on_rp2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("homology-check", &fixture("rp2.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("H_*(E) = (Z, Z/2, 0)"));
    assert!(md.contains("H_*(N) = (Z, Z/2, 0)"));
    assert!(md.contains("EQUAL"));
}

#[test]
fn render_k2_emits_colored_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("render", &fixture("torus.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let svg = fs::read_to_string(dir.path().join("fiber.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    for (color, name) in [("#1f4fd1", "L0"), ("#1b8f3a", "L1[1]"), ("#1b8f3a", "L1[2]"), ("#d12a1f", "L2")] {
        assert!(svg.contains(color) && svg.contains(&format!("<title>{name}</title>")), "{name}");
    }
    let base = fs::read_to_string(dir.path().join("base.svg")).unwrap();
    assert_eq!(base.matches("class=\"arc\"").count(), 1);
}

#[test]
fn report_all_exits_one_on_the_profile_defect() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("report-all", &fixture("s2.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let fails: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL ")).collect();
    assert_eq!(fails.len(), 1, "{stdout}");
    assert!(fails[0].contains("profiles/") && fails[0].contains("residual") && fails[0].contains("[reflection condition]"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    for text in [
        r#"{"case": "two", "handles": [], "framings": []}"#,
        "{ not json",
        r#"{"dim": 3, "case": "four", "handles": [{"alpha": [1], "beta": [1]}], "intersections": [[1, 1]]}"#,
    ] {
        fs::write(&bad, text).unwrap();
        let o = run("assemble", &bad, &dir.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!dir.path().join("out").exists());
    }
    let o = run("assemble", &dir.path().join("missing.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run("assemble", &fixture("rp2.json"), dir.path(), &["--tol", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tol_overrides_comparison_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("homology-check", &fixture("cp2.json"), dir.path(), &["--tol", "1e-4"]);
    assert_eq!(o.status.code(), Some(0));
    let t = &report(dir.path())["tolerances"];
    assert_eq!(t["transport"], 1e-4);
    assert_eq!(t["radial"], 1e-4);
    assert_eq!(t["halftwist"], 1e-4);
    assert_eq!(t["ode"], 1e-10);
}

#[test]
fn a_tight_tolerance_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("verify-local", &fixture("s2.json"), dir.path(), &["--tol", "1e-15"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL transport_equivalence/"));
}
