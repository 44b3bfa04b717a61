use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hjmm::config::RunConfig;
use hjmm::semigroup::ShiftSemigroup;
use hjmm::weighted_spaces::lp_nu_norm;
use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn hjmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjmm")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config() -> Value {
    json!({
        "space": {"nu": 1.0, "p": 2.0},
        "grid": {"x_max": 10.0, "n_cells": 100},
        "volatility": {
            "family": "exponential",
            "params": {"factors": [{"sigma": 0.3, "lambda": 1.5, "level": 0.5, "slope": 0.4}]}
        },
        "noise": {"dim_h": 1, "seed": 3},
        "run": {"t_end": 1.0, "snapshots_stride": 5, "r0": {"kind": "exponential", "level": 0.5, "rate": 1.0}},
        "experiment": {
            "couple": {"r0_b": {"kind": "zero"}, "n_paths": 8},
            "invariant_stats": {"r0_b": {"kind": "zero"}, "n_paths": 40, "probes": [0.5, 1.0]},
            "converge": {"levels": 2, "n_paths": 4}
        }
    })
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn check_invariant_exit_codes() {
    let pass = hjmm(&["check-invariant", configs().join("passing.json").to_str().unwrap()]);
    assert_eq!(code(&pass), 0, "{}", String::from_utf8_lossy(&pass.stderr));
    let report: Value = serde_json::from_slice(&pass.stdout).unwrap();
    assert_eq!(report["condition_holds"], json!(true));
    assert!(report["omega"].as_f64().unwrap() > 0.0);

    let fail = hjmm(&["check-invariant", configs().join("failing.json").to_str().unwrap()]);
    assert_eq!(code(&fail), 1);
    let report: Value = serde_json::from_slice(&fail.stdout).unwrap();
    assert_eq!(report["condition_holds"], json!(false));
    assert!(report["omega"].is_null());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let mut c = small_config();
    c["run"]["t_endd"] = json!(1.0);
    let path = write_config(dir.path(), "typo.json", &c);
    let out = hjmm(&["simulate", &path, "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_endd"));

    let mut c = small_config();
    c["space"]["p"] = json!(1.5);
    let path = write_config(dir.path(), "p.json", &c);
    assert_eq!(code(&hjmm(&["simulate", &path, "-o", dir.path().to_str().unwrap()])), 2);

    let path = dir.path().join("broken.json");
    fs::write(&path, "{ not json").unwrap();
    assert_eq!(code(&hjmm(&["simulate", path.to_str().unwrap()])), 2);

    assert_eq!(code(&hjmm(&["simulate"])), 2);
    assert_eq!(code(&hjmm(&["no-such-verb", "x.json"])), 2);
}

#[test]
fn unreadable_config_exits_2_and_unwritable_output_exits_4() {
    assert_eq!(code(&hjmm(&["simulate", "/nonexistent/run.json"])), 2);
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &small_config());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = hjmm(&["simulate", &path, "-o", blocker.join("out").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn blow_up_exits_3() {
    let dir = TempDir::new().unwrap();
    let c = json!({
        "space": {"nu": 1.0, "p": 2.0},
        "grid": {"x_max": 10.0, "n_cells": 100},
        "volatility": {"family": "linear", "params": {"factors": [{"sigma": 40.0, "lambda": 0.6}]}},
        "run": {"t_end": 5.0, "r0": {"kind": "flat", "value": 5.0}}
    });
    let path = write_config(dir.path(), "blow.json", &c);
    let out = hjmm(&["simulate", &path, "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert_eq!(code(&hjmm(&["simulate", &path, "-o", a.to_str().unwrap()])), 0);
    assert_eq!(code(&hjmm(&["--threads", "3", "simulate", &path, "-o", b.to_str().unwrap()])), 0);
    assert_eq!(code(&hjmm(&["simulate", &path, "--seed", "4", "-o", c.to_str().unwrap()])), 0);
    for f in ["path.csv", "norms.csv", "diagnostics.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert_ne!(read(&a, "path.csv"), read(&c, "path.csv"));
    let header = read(&a, "path.csv");
    assert!(header.starts_with("t,x,value\n"));
    assert!(!header.contains('\r'));
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &small_config());
    let a = dir.path().join("a");
    assert_eq!(code(&hjmm(&["simulate", &path, "--seed", "9", "-o", a.to_str().unwrap()])), 0);
    let diag: Value = serde_json::from_str(&read(&a, "diagnostics.json")).unwrap();
    assert_eq!(diag["seed"], json!(9));
    let echo = write_config(dir.path(), "echo.json", &diag["effective_config"]);
    let b = dir.path().join("b");
    assert_eq!(code(&hjmm(&["simulate", &echo, "-o", b.to_str().unwrap()])), 0);
    assert_eq!(read(&a, "path.csv"), read(&b, "path.csv"));
    assert_eq!(read(&a, "norms.csv"), read(&b, "norms.csv"));
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let mut c = small_config();
    c["grid"]["n_cells"] = json!(400);
    c["run"]["t_end"] = json!(0.8);
    let path = write_config(dir.path(), "run.json", &c);
    for verb in ["couple", "invariant-stats", "converge"] {
        let a = dir.path().join(format!("{verb}-1"));
        let b = dir.path().join(format!("{verb}-4"));
        let ra = hjmm(&["--threads", "1", verb, &path, "-o", a.to_str().unwrap()]);
        let rb = hjmm(&["--threads", "4", verb, &path, "-o", b.to_str().unwrap()]);
        assert_eq!(code(&ra), 0, "{}", String::from_utf8_lossy(&ra.stderr));
        assert_eq!(code(&rb), 0);
        assert_eq!(ra.stdout, rb.stdout, "{verb}");
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            let name = name.to_str().unwrap();
            assert_eq!(read(&a, name), read(&b, name), "{verb} {name}");
        }
    }
}

#[test]
fn zero_volatility_norms_follow_the_shift() {
    let dir = TempDir::new().unwrap();
    let mut c = small_config();
    c["volatility"] = json!({"family": "zero"});
    let path = write_config(dir.path(), "zero.json", &c);
    assert_eq!(code(&hjmm(&["simulate", &path, "-o", dir.path().to_str().unwrap()])), 0);

    let resolved = RunConfig::from_path(Path::new(&path)).unwrap().resolve().unwrap();
    let sg = ShiftSemigroup::zero_extension(resolved.grid.clone());
    let mut rdr = csv::Reader::from_path(dir.path().join("norms.csv")).unwrap();
    let mut rows = 0;
    for row in rdr.deserialize() {
        let (t, norm): (f64, f64) = row.unwrap();
        let expected = lp_nu_norm(&sg.shift(t, &resolved.sim.r0).unwrap());
        assert!((norm - expected).abs() <= 1e-12 * (1.0 + expected), "t={t}: {norm} vs {expected}");
        rows += 1;
    }
    assert!(rows > 10);
}

#[test]
fn coupling_identical_starts_gives_zero_distance() {
    let dir = TempDir::new().unwrap();
    let mut c = small_config();
    c["experiment"]["couple"]["r0_b"] = c["run"]["r0"].clone();
    let path = write_config(dir.path(), "same.json", &c);
    assert_eq!(code(&hjmm(&["couple", &path, "-o", dir.path().to_str().unwrap()])), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("coupling.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "mean_distance", "mean_log_distance"]);
    for row in rdr.records() {
        let row = row.unwrap();
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn additive_constants_have_zero_volatility_lipschitz() {
    let dir = TempDir::new().unwrap();
    let mut c: Value = serde_json::from_str(&fs::read_to_string(configs().join("additive.json")).unwrap()).unwrap();
    c["experiment"]["estimate"] = json!({"n_samples": 50, "radius": 1.0});
    let path = write_config(dir.path(), "additive.json", &c);
    let out = hjmm(&["estimate-constants", &path, "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&read(dir.path(), "constants.json")).unwrap();
    assert_eq!(v["constants"]["l_g"]["empirical"], json!(0.0));
    // no Lipschitz part in either coefficient, so the contraction constant vanishes
    assert_eq!(v["contraction_constant"], json!(0.0));
}

#[test]
fn bond_prices_are_written() {
    let dir = TempDir::new().unwrap();
    let out = hjmm(&["bond-price", configs().join("additive.json").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("bonds.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "T", "price", "yield"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert!(!rows.is_empty());
    for row in &rows {
        let t: f64 = row[0].parse().unwrap();
        let maturity: f64 = row[1].parse().unwrap();
        let price: f64 = row[2].parse().unwrap();
        assert!(maturity >= t);
        assert!(price > 0.0 && price <= 1.5);
        assert_eq!(row[3].is_empty(), maturity == t);
    }
}
