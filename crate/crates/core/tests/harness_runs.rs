use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crystal_relax::harness::drivers::ensemble_projection;
use crystal_relax::harness::{run_experiment, ExperimentSpec, RunOptions};

fn spec(json: &str) -> ExperimentSpec {
    ExperimentSpec::from_json(json).unwrap()
}

fn run(s: &ExperimentSpec, dir: &Path) -> crystal_relax::harness::RunArtifact {
    run_experiment(s, &RunOptions { out: Some(dir.to_path_buf()), threads: 1 }).unwrap()
}

#[test]
fn identical_specs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let s = spec(r#"{"experiment":"micro_vs_pde","n":[8,16],"K":1.5,"p":2,"t_end":2e-5,"times":[1e-5],"ensemble":4,"seed":5,"pde":{"m":16}}"#);
    let a = run(&s, &tmp.path().join("a"));
    let b = run(&s, &tmp.path().join("b"));
    assert!(a.failure.is_none());
    assert_eq!(a.manifest.files.len(), b.manifest.files.len());
    for (fa, fb) in a.manifest.files.iter().zip(&b.manifest.files) {
        assert_eq!(fa.path, fb.path);
        if fa.path.ends_with(".csv") {
            assert_eq!(fa.sha256, fb.sha256, "{}", fa.path);
            assert_eq!(fs::read(a.dir.join(&fa.path)).unwrap(), fs::read(b.dir.join(&fb.path)).unwrap());
        }
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn every_driver_writes_a_constant_mass_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let specs = [
        r#"{"experiment":"micro_vs_pde","n":[8],"K":1.5,"p":1,"t_end":1e-5,"ensemble":2,"pde":{"m":16}}"#,
        r#"{"experiment":"sigma_compare","K":1.5,"p":2,"t_end":1e-5,"pde":{"m":16}}"#,
        r#"{"experiment":"generator_test","n":[8],"K":1.5,"p":2,"t_end":1e-7,"generator":{"samples":64}}"#,
        r#"{"experiment":"self_similar","K":1.5,"p":2,"t_end":1e-4,"pde":{"m":16}}"#,
        r#"{"experiment":"wetting","K":1.5,"p":2,"t_end":1e-5,"profile":"bump","pde":{"m":32}}"#,
    ];
    for (i, text) in specs.iter().enumerate() {
        let s = spec(text);
        let art = run(&s, &tmp.path().join(i.to_string()));
        assert!(art.failure.is_none(), "{text}: {:?}", art.failure);
        let body = fs::read_to_string(art.dir.join("mass.csv")).unwrap();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let mut by_source: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in rdr.records() {
            let r = r.unwrap();
            by_source.entry(r[0].to_string()).or_default().push(r[2].parse().unwrap());
        }
        assert!(!by_source.is_empty());
        for (source, values) in by_source {
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(hi - lo <= 1e-12 * hi.abs().max(1.0), "{text} {source}: {values:?}");
        }
    }
}

#[test]
fn standard_error_halves_when_the_ensemble_quadruples() {
    let mean_se = |ensemble: usize| {
        let s = spec(&format!(r#"{{"experiment":"micro_vs_pde","n":[16],"K":1.5,"p":2,"t_end":2e-4,"ensemble":{ensemble},"seed":3}}"#));
        let ens = ensemble_projection(&s, 16).unwrap();
        let se = ens.stderr.last().unwrap();
        se.values().iter().sum::<f64>() / se.len() as f64
    };
    let ratio = mean_se(64) / mean_se(16);
    assert!((ratio - 0.5).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn failed_runs_keep_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let s = spec(r#"{"experiment":"wetting","K":5,"p":2,"t_end":1e-9,"profile":"bump","scaling":"rough","pde":{"m":64}}"#);
    let art = run(&s, tmp.path());
    assert!(art.failure.is_some());
    assert_eq!(art.manifest.status, "failed");
    assert!(art.manifest.files.iter().any(|f| f.path == "support.csv"));
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn committed_specs_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut count = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count > 0);
}
