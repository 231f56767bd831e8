use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flrwn"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn setup(body: &str) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, body).unwrap();
    let out = dir.path().join("out");
    (dir, config, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_column(path: &Path) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect()
}

#[test]
fn every_subcommand_has_help() {
    for c in ["simulate", "transform", "estimate", "risk", "equivalence", "report"] {
        let o = Command::new(env!("CARGO_BIN_EXE_flrwn")).args([c, "--help"]).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{c}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("--config"));
    }
}

#[test]
fn single_replication_is_a_config_error_with_line() {
    let (_d, config, out) = setup("seed = 3\nreplications = 1\nn_grid = [16, 32]\n");
    let o = run(&["risk"], &config, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("c.toml:2:"), "{err}");
    assert!(err.contains("replications"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let (_d, config, out) = setup("seed = 3\nn_grid = [16]\n\n[design]\nalpah = 2.0\n");
    let o = run(&["simulate"], &config, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("c.toml:5"), "{err}");
    assert!(err.contains("alpah"), "{err}");
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate"], &dir.path().join("none.toml"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_design_exits_three_and_leaves_no_partial_output() {
    let (_d, config, out) = setup("seed = 4\nn_grid = [16, 300]\n");
    let sim = run(&["simulate"], &config, &out);
    assert_eq!(sim.status.code(), Some(0), "{}", stderr(&sim));
    let before: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();

    let o = run(&["transform"], &config, &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("truncation"));
    let mut after: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    let mut before = before;
    before.sort();
    after.sort();
    assert_eq!(before, after);
    assert!(!out.join("whitenoise_n16.csv").exists());
}

#[test]
fn transform_roundtrip_recovers_responses() {
    let (_d, config, out) = setup("seed = 5\nn_grid = [8, 24, 48]\n");
    let o = run(&["transform"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for n in [8, 24, 48] {
        let y = read_column(&out.join(format!("responses_n{n}.csv")));
        let back = read_column(&out.join(format!("roundtrip_n{n}.csv")));
        assert_eq!(y.len(), n);
        let err = y.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "n = {n}: {err:e}");
        assert!(out.join(format!("whitenoise_n{n}.csv.json")).exists());
    }
}

#[test]
fn equivalence_on_defaults_is_calibrated() {
    let (_d, config, out) = setup("n_grid = [64, 128]\nreplications = 4\n");
    let o = run(&["equivalence"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("equivalence.json")).unwrap()).unwrap();
    let rate = v["ks"]["rejection_rate"].as_f64().unwrap();
    let coords = v["ks"]["statistics"].as_array().unwrap().len() as f64;
    assert_eq!(coords, 25.0);
    let limit = 0.05 + 3.0 * (0.05 * 0.95 / coords).sqrt();
    assert!(rate <= limit, "rejection rate {rate} > {limit}");
    assert_eq!(v["meta"]["command"], "equivalence");
    assert!(v["meta"]["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn seed_override_changes_outputs_and_is_recorded() {
    let (_d, config, out) = setup("seed = 1\nn_grid = [8]\n");
    let a = out.join("a");
    let b = out.join("b");
    assert_eq!(run(&["simulate"], &config, &a).status.code(), Some(0));
    assert_eq!(run(&["simulate", "--seed", "2"], &config, &b).status.code(), Some(0));
    let ya = std::fs::read(a.join("responses_n8.csv")).unwrap();
    let yb = std::fs::read(b.join("responses_n8.csv")).unwrap();
    assert_ne!(ya, yb);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("responses_n8.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 2);
}
