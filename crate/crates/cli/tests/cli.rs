use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn riesz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riesz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn run_with(cmd: &str, config: &str) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), config);
    let out = dir.path().join("out");
    let o = riesz(&[
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    (dir, o)
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

const SMALL_MESH: &str = r#""mesh": {"n": 1, "J": 0, "L": 4, "T": 0}"#;

#[test]
fn malformed_config_exits_with_two() {
    let (_d, o) = run_with("verify", "{ not json");
    assert_eq!(o.status.code(), Some(2));
    let (_d, o) = run_with("verify", r#"{"unknown_field": 1}"#);
    assert_eq!(o.status.code(), Some(2));
    let (_d, o) = run_with("constants", r#"{"young": ["log:p=0.5,delta=1"]}"#);
    assert_eq!(o.status.code(), Some(2));
    let o = riesz(&["verify", "--mesh", "L=abc"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_family_fails_verification() {
    // The root is fully covered by its two children.
    let cfg = format!(
        r#"{{ {SMALL_MESH}, "families": [{{"shift": 0, "cubes": [[0,0,0],[0,1,0],[0,1,1]]}}] }}"#
    );
    let (_d, o) = run_with("verify", &cfg);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("FAIL [sparsity]"), "{err}");
    assert!(
        err.contains(riesz_core::sparse::SPARSITY_CONDITION),
        "{err}"
    );
}

#[test]
fn empty_config_is_a_warned_no_op() {
    let (_d, o) = run_with("verify", "{}");
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nothing to verify"));
}

#[test]
fn default_verify_suite_passes_on_a_small_mesh() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = riesz(&[
        "verify",
        "--mesh",
        "L=5,T=8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = read_csv(&out.join("verify-summary.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[2] == "true"));
    for suite in [
        "sparsity",
        "domination",
        "overlap",
        "corona",
        "upper-comparison",
    ] {
        assert!(rows.iter().any(|r| r[0] == suite), "suite {suite} missing");
    }
}

#[test]
fn two_value_a2_row() {
    let cfg = format!(
        r#"{{ {SMALL_MESH}, "exponents": [{{"alpha": 0.5, "p": 2, "q": 2}}],
            "weights": [{{"u": "two-value:a=2,b=1,split=0.5", "sigma": "constant:c=1"}}],
            "constants": ["ap"] }}"#
    );
    let (d, o) = run_with("constants", &cfg);
    assert_eq!(o.status.code(), Some(0));
    let rows = read_csv(&d.path().join("out/constants-summary.csv"));
    let u_row = rows.iter().find(|r| r[4] == "u").unwrap();
    assert!((u_row[6].parse::<f64>().unwrap() - 1.125).abs() < 1e-12);
}

#[test]
fn constant_weights_give_an_all_ones_table() {
    let cfg = format!(
        r#"{{ {SMALL_MESH}, "exponents": [{{"alpha": 0.5, "p": 1.3333333333333333}}],
            "weights": [{{"u": "constant:c=1", "sigma": "constant:c=1"}}],
            "constants": ["ap", "apq", "ainfty", "fujii-wilson", "fujii-wilson-dyadic", "two-weight"] }}"#
    );
    let (d, o) = run_with("constants", &cfg);
    assert_eq!(o.status.code(), Some(0));
    let rows = read_csv(&d.path().join("out/constants-summary.csv"));
    assert_eq!(rows.len(), 11);
    for r in rows {
        assert!((r[6].parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn only_infinite_output_exits_with_three() {
    let cfg = format!(
        r#"{{ {SMALL_MESH}, "exponents": [{{"alpha": 0.5, "p": 2, "q": 2}}],
            "weights": [{{"u": "two-value:a=0,b=1,split=0.5", "sigma": "two-value:a=1,b=0,split=0.5"}}],
            "constants": ["ap"] }}"#
    );
    let (_d, o) = run_with("constants", &cfg);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn single_cube_sandwich_row() {
    let cfg = format!(
        r#"{{ {SMALL_MESH}, "exponents": [{{"alpha": 0.5, "p": 2, "q": 2}}],
            "weights": [{{"u": "constant:c=1", "sigma": "constant:c=1"}}],
            "families": [{{"shift": 0, "cubes": [[0,0,0]]}}] }}"#
    );
    let (d, o) = run_with("sandwich", &cfg);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = read_csv(&d.path().join("out/sandwich-summary.csv"));
    assert_eq!(rows.len(), 1);
    let f = |i: usize| rows[0][i].parse::<f64>().unwrap();
    assert!((f(5) - 1.0).abs() < 1e-12 && (f(6) - 1.0).abs() < 1e-12);
    assert!((f(7) - 1.0).abs() < 1e-10);
    assert!((f(9) - 0.5).abs() < 1e-10);
    // p = q refuses the bump bounds.
    assert_eq!(rows[0][12], "");
    assert!(d.path().join("out/sandwich-plot.csv").exists());
}

#[test]
fn constant_weight_exponent_fit_is_skipped() {
    let cfg = format!(
        r#"{{ {SMALL_MESH}, "exponents": [{{"alpha": 0.5, "p": 1.3333333333333333}}],
            "weights": [{{"u": "constant:c=1", "sigma": "constant:c=1"}}] }}"#
    );
    let (d, o) = run_with("exponent-fit", &cfg);
    assert_eq!(o.status.code(), Some(0));
    let rows = read_csv(&d.path().join("out/exponent-fit-summary.csv"));
    assert_eq!(rows[0][5], "skip");
    assert_eq!(rows[0][3], "");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    for cmd in [
        "constants",
        "verify",
        "sparse",
        "corona",
        "norm",
        "sandwich",
        "exponent-fit",
    ] {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        for (out, jobs) in [(&a, "1"), (&b, "3")] {
            let o = riesz(&[
                cmd,
                "--mesh",
                "L=5,T=6",
                "--seed",
                "42",
                "--jobs",
                jobs,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        assert!(!sa.is_empty());
        assert_eq!(sa, sb, "{cmd} outputs differ between reruns");
    }
}
