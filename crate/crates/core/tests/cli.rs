//! End-to-end runs of the `levylan` binary on small configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cauchy_config(out: &Path) -> Value {
    let c = 1.0 / std::f64::consts::PI;
    json!({
        "schema_version": 1,
        "model": { "alpha": 1.0, "c_plus": c, "c_minus": c },
        "theta": { "beta": 0.0, "gamma": 1.0 },
        "schemes": [ { "n": 100, "h": 0.01 } ],
        "experiment": { "times": [0.01], "mc_size": 2000, "bins": 5, "paths": 2 },
        "seed": 5,
        "output_dir": out,
    })
}

fn levylan(cmd: &str, config: &Value, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_levylan"))
        .arg(cmd)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn density_writes_stamped_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = levylan("density", &cauchy_config(&out), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));

    let verdicts = read_json(&out.join("density_verdicts.json"));
    assert_eq!(verdicts["schema_version"], 1);
    assert_eq!(verdicts["seed"], 5);
    let hash = verdicts["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);

    let csv = fs::read_to_string(out.join("density_limit.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with("config_hash,seed"), "{header}");
    // The Cauchy density at zero is 1/π.
    let row = lines.find(|l| l.starts_with("0,") || l.starts_with("0.0,")).expect("a row at x = 0");
    let f0: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((f0 - 1.0 / std::f64::consts::PI).abs() < 1e-6, "{f0}");
    assert!(row.ends_with(&format!("{hash},5")));
}

#[test]
fn simulate_is_reproducible_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let mut cfg = cauchy_config(&a);
    assert!(levylan("simulate", &cfg, dir.path(), &[]).status.success());
    cfg["output_dir"] = json!(b);
    assert!(levylan("simulate", &cfg, dir.path(), &[]).status.success());
    let c_str = c.to_str().unwrap();
    assert!(levylan("simulate", &cfg, dir.path(), &["--seed", "6", "--out", c_str]).status.success());

    let csvs = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v
    };
    let (pa, pb, pc) = (csvs(&a), csvs(&b), csvs(&c));
    assert_eq!(pa.len(), 2);
    assert_eq!(pc.len(), 2);
    for ((x, y), z) in pa.iter().zip(&pb).zip(&pc) {
        // The output directory is part of the hashed document, so only the
        // data columns are compared.
        let data = |p: &Path| -> Vec<String> {
            fs::read_to_string(p).unwrap().lines().map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect()
        };
        let (x, y, z) = (data(x), data(y), data(z));
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
    assert_eq!(read_json(&c.join("simulate_verdicts.json"))["seed"], 6);
}

#[test]
fn fisher_reports_the_cauchy_information() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = levylan("fisher", &cauchy_config(&out), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = &read_json(&out.join("fisher.json"))["body"]["fisher"];
    let i11 = body["sigma11"].as_f64().expect("sigma11 present");
    assert!((i11 - 0.5).abs() < 1e-4, "{body}");
}

#[test]
fn invalid_configs_exit_with_two_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let good = cauchy_config(&out);

    let mut unknown = good.clone();
    unknown["experiment"]["bogus"] = json!(1);
    let mut version = good.clone();
    version["schema_version"] = json!(2);
    let mut alpha = good.clone();
    alpha["model"]["alpha"] = json!(2.5);
    let mut gamma = good.clone();
    gamma["theta"]["gamma"] = json!(-1.0);

    for bad in [unknown, version, alpha, gamma] {
        let o = levylan("density", &bad, dir.path(), &[]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
        assert!(!out.exists());
    }
}

#[test]
fn missing_config_file_is_an_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_levylan"))
        .args(["check", "--config", "/nonexistent/levylan.json"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
