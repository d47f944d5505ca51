use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crystal-relax"))
        .args(args)
        .env_remove("CRYSTAL_RELAX_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, body: &str) -> String {
    let p = dir.join("spec.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn sigma_table_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let o = cli(&["sigma-table", "-K", "1.5", "-p", "2", "--kind", "continuous", "--u-max", "2", "--points", "41", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sigma_continuous.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 41);
    // The continuous Gaussian tension is exactly 2u.
    for r in rows {
        let (u, s) = r.split_once(',').unwrap();
        let (u, s): (f64, f64) = (u.parse().unwrap(), s.parse().unwrap());
        assert!((s - 2.0 * u).abs() < 1e-8);
    }
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["files"][0]["path"], "sigma_continuous.csv");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(cli(&["run", "--spec", "/definitely/missing.json"]).status.code(), Some(2));
    assert_eq!(cli(&["run"]).status.code(), Some(2));
    assert_eq!(cli(&["sigma-table", "-p", "2"]).status.code(), Some(2));

    let rough_sos = write_spec(tmp.path(), r#"{"experiment":"micro_vs_pde","n":[8],"K":1.5,"p":1,"t_end":1e-6,"scaling":"rough"}"#);
    let o = cli(&["run", "--spec", &rough_sos, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scaling"));

    let typo = write_spec(tmp.path(), r#"{"experiment":"wetting","K":1.5,"p":2,"t_end":1e-6,"thresold":1}"#);
    assert_eq!(cli(&["run", "--spec", &typo, "--out", out]).status.code(), Some(2));

    let ss = write_spec(tmp.path(), r#"{"experiment":"self_similar","K":1.5,"p":2,"t_end":1e-4,"pde":{"m":16}}"#);
    assert_eq!(cli(&["wetting", "--spec", &ss, "--out", out]).status.code(), Some(2));
}

#[test]
fn self_similar_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ss");
    let spec = write_spec(tmp.path(), r#"{"experiment":"self_similar","K":1.5,"p":2,"t_end":1e-4,"pde":{"m":16},"self_similar":{"tol":1e-5}}"#);
    let o = cli(&["self-similar", "--spec", &spec, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["experiment"], "self_similar");
    assert_eq!(m["summary"]["converged"], true);
    for f in m["files"].as_array().unwrap() {
        assert!(out.join(f["path"].as_str().unwrap()).exists());
    }
}

#[test]
fn seed_override_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        r#"{"experiment":"micro_vs_pde","n":[8],"K":1.5,"p":2,"t_end":1e-5,"ensemble":3,"seed":1,"pde":{"m":16}}"#,
    );
    let run = |seed: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = cli(&["run", "--spec", &spec, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("micro_n8_mean.csv")).unwrap()
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(manifest(&tmp.path().join("a"))["seed"], 7);
}

#[test]
fn numerical_failure_exits_3_and_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("blow");
    // The K-weighted exponent on the bump's curvature passes the overflow limit.
    let spec = write_spec(
        tmp.path(),
        r#"{"experiment":"wetting","K":5,"p":2,"t_end":1e-9,"profile":"bump","scaling":"rough","pde":{"m":64}}"#,
    );
    let o = cli(&["wetting", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("blow-up"));
    assert!(out.join("support.csv").exists());
}
