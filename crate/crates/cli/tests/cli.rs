use std::fs;
use std::path::Path;
use std::process::Command;

use oed_cli::{load_problem, run};

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn oed(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_oed"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn design_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

const QUADRATIC_VDM: &str = r#"{
  "model": {"id": "quadratic"},
  "algorithm": "vdm",
  "grid": {"product": [{"start": -1, "stop": 1, "n": 201}]},
  "seed": 7
}"#;

#[test]
fn same_seed_gives_identical_design_files() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "q.json", QUADRATIC_VDM);
    let mut cfg = load_problem(&path).unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        cfg.output_dir = tmp.path().join(format!("run{k}"));
        run(&cfg).unwrap();
        outputs.push(fs::read(cfg.output_dir.join("design.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn flash_ybt_emits_five_support_points() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(
        tmp.path(),
        "flash.json",
        r#"{
  "model": {"id": "flash-meoh-water"},
  "algorithm": "ybt",
  "grid": {"preset": "flash"},
  "sigma_eps": [[1e-4, 0], [0, 1]]
}"#,
    );
    let mut cfg = load_problem(&path).unwrap();
    cfg.output_dir = tmp.path().join("out");
    run(&cfg).unwrap();
    let rows = design_rows(&fs::read_to_string(cfg.output_dir.join("design.csv")).unwrap());
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[2] > 0.001));
    let total: f64 = rows.iter().map(|r| r[2]).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.output_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["jacobian_evaluations"], 9191);
    assert_eq!(summary["support_points"], 5);
    let trace = fs::read_to_string(cfg.output_dir.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().count(),
        1 + summary["iterations"].as_u64().unwrap() as usize
    );
}

#[test]
fn adagpr_design_is_in_original_units() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(
        tmp.path(),
        "q.json",
        r#"{"model": {"id": "quadratic", "lower": -2, "upper": 2}, "algorithm": "adagpr", "n_initial": 5}"#,
    );
    let mut cfg = load_problem(&path).unwrap();
    cfg.output_dir = tmp.path().join("out");
    run(&cfg).unwrap();
    let rows = design_rows(&fs::read_to_string(cfg.output_dir.join("design.csv")).unwrap());
    // the D-optimum on [-2, 2] is {-2, 0, 2}
    assert!(rows.iter().any(|r| r[0] < -1.9), "{rows:?}");
    assert!(rows.iter().any(|r| r[0] > 1.9), "{rows:?}");
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.json", QUADRATIC_VDM);
    let out = tmp.path().join("out");
    let o = oed(&[
        "run",
        good.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["seed"], 3);

    let o = oed(&["check", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let filled = write_config(tmp.path(), "filled.json", &String::from_utf8(o.stdout).unwrap());
    assert_eq!(load_problem(&filled).unwrap(), load_problem(&good).unwrap());

    let bad = write_config(
        tmp.path(),
        "bad.json",
        r#"{"model": {"id": "quadratic"}, "algorithm": "adagpr", "n_initial": 5, "grid": {"points": [[0]]}}"#,
    );
    assert_eq!(oed(&["check", bad.to_str().unwrap()]).status.code(), Some(2));
    let broken = write_config(tmp.path(), "broken.json", "{\"model\": ");
    let o = oed(&["run", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.json:1:"));

    // two distinct points cannot identify three parameters
    let singular = write_config(
        tmp.path(),
        "singular.json",
        r#"{"model": {"id": "quadratic"}, "algorithm": "vdm", "grid": {"points": [[0], [0.5], [0.5], [0]]}}"#,
    );
    let o = oed(&["run", singular.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(oed(&["bench", "nonsense"]).status.code(), Some(2));
}
