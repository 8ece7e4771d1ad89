use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shockstab"));
    c.env("SHOCKSTAB_LOG", "error");
    c
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn assert_valid(name: &str, doc: &Value) {
    let v = schema(name);
    let errs: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errs.is_empty(), "{name}: {errs:?}\n{doc:#}");
}

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
    _dir: tempfile::TempDir,
}

fn run_config(sub: &str, config: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run { code: o.status.code().unwrap_or(-1), out, stderr: String::from_utf8_lossy(&o.stderr).into_owned(), _dir: dir }
}

#[test]
fn analyze_appendix_is_stable() {
    let r = run_config("analyze", r#"{"command": "analyze", "system": {"builtin": "appendix_3x3"}, "setting": "constant"}"#, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let a = read(&r.out.join("analysis.json"));
    assert_valid("analysis", &a);
    assert_valid("manifest", &read(&r.out.join("manifest.json")));
    assert_eq!(a["granted"], true);
    assert!(a["certificate"]["alpha"].as_f64().unwrap() > 0.3);
    let csv = std::fs::read_to_string(r.out.join("fourier.csv")).unwrap();
    assert!(csv.starts_with("side,xi,re_1,re_2,re_3\n"));
}

#[test]
fn analyze_burgers_certifies_min_theta() {
    let r = run_config(
        "analyze",
        r#"{"command": "analyze", "system": {"builtin": "burgers_bistable", "theta": 0.25}, "setting": "shock"}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let a = read(&r.out.join("analysis.json"));
    assert_valid("analysis", &a);
    let alpha = a["certificate"]["alpha"].as_f64().unwrap();
    assert!((alpha - 0.25).abs() <= 0.02, "alpha = {alpha}");
    assert_eq!(a["lax"]["is_lax"], true);
}

#[test]
fn characteristic_shock_exits_with_its_code() {
    let dir = tempfile::tempdir().unwrap();
    let sys = r#"{
        "n": 2,
        "flux_poly": [[{"c": 0.5, "e": [2, 0]}], [{"c": 0.5, "e": [0, 1]}]],
        "source_poly": [[{"c": -0.25, "e": [1, 0]}, {"c": 1.25, "e": [2, 0]}, {"c": -1.0, "e": [3, 0]}], [{"c": -1.0, "e": [0, 1]}]],
        "shock": {"u_minus": [1.0, 0.0], "u_plus": [0.0, 0.0], "sigma": 0.5}
    }"#;
    std::fs::write(dir.path().join("sys.json"), sys).unwrap();
    let cfg = r#"{"command": "analyze", "system": {"file": "sys.json"}, "setting": "shock"}"#;
    std::fs::write(dir.path().join("config.json"), cfg).unwrap();
    let out = dir.path().join("out");
    let o = bin().args(["analyze", "--config"]).arg(dir.path().join("config.json")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(5));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "Characteristic");
    assert_valid("error", &err);
    assert_valid("error", &read(&out.join("error.json")));
}

#[test]
fn unknown_keys_are_rejected() {
    let r = run_config("analyze", r#"{"command": "analyze", "system": {"builtin": "appendix_3x3"}, "setting": "constant", "colour": 1}"#, &[]);
    assert_eq!(r.code, 2);
    let err: Value = serde_json::from_str(&r.stderr).unwrap();
    assert_eq!(err["error"], "Config");
    let r = run_config(
        "simulate",
        r#"{"command": "simulate", "system": {"builtin": "burgers_bistable"}, "setting": "shock",
            "simulation": {"grid": {"h": 0.01, "stride": 3}, "initial": []}}"#,
        &[],
    );
    assert_eq!(r.code, 2);
}

#[test]
fn subcommand_must_match_config() {
    let r = run_config("simulate", r#"{"command": "analyze", "system": {"builtin": "appendix_3x3"}, "setting": "constant"}"#, &[]);
    assert_eq!(r.code, 2);
}

#[test]
fn symmetrizer_is_deterministic() {
    let cfg = r#"{"command": "symmetrizer", "symmetrizer": {"samples": 200}}"#;
    let a = run_config("symmetrizer", cfg, &["--seed", "11"]);
    let b = run_config("symmetrizer", cfg, &["--seed", "11"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let ta = std::fs::read(a.out.join("symmetrizer.json")).unwrap();
    let tb = std::fs::read(b.out.join("symmetrizer.json")).unwrap();
    assert_eq!(ta, tb);
    let doc: Value = serde_json::from_slice(&ta).unwrap();
    assert_valid("symmetrizer", &doc);
    assert_eq!(doc["pass"], true);
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["two_by_two"]["samples"], 200);
}

#[test]
fn zero_data_gives_zero_series() {
    let r = run_config(
        "simulate",
        r#"{"command": "simulate", "system": {"builtin": "burgers_bistable"}, "setting": "shock",
            "simulation": {"grid": {"length": 3.0, "h": 0.02, "t_final": 0.5},
                           "initial": [{"kind": "bump", "a": 1.0, "b": 2.0, "direction": [0.0]}]}}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = read(&r.out.join("summary.json"));
    assert_valid("simulation", &s);
    assert_eq!(s["psi_inf"], 0.0);
    assert_eq!(s["max_W1inf"], 0.0);
    assert!(s["alpha_fit"].is_null());
    let csv = std::fs::read_to_string(r.out.join("norms.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[1..].iter().all(|x| *x == 0.0), "{line}");
    }
}

#[test]
fn burgers_run_fits_rate_and_passes_monitor() {
    let r = run_config(
        "simulate",
        r#"{"command": "simulate", "system": {"builtin": "burgers_bistable", "theta": 0.25}, "setting": "shock",
            "simulation": {"grid": {"length": 4.0, "h": 0.01, "t_final": 3.0, "snapshot_stride": 1},
                           "initial": [{"kind": "bump", "a": 1.0, "b": 2.0, "direction": [1.0]}],
                           "h2_size": 0.01, "fit_window": [0.2, 1.9], "energy": {"alpha_prime": 0.2}}}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = read(&r.out.join("summary.json"));
    assert_valid("simulation", &s);
    let a = s["alpha_fit"].as_f64().unwrap();
    assert!((a - 0.25).abs() < 0.01, "alpha_fit = {a}");
    assert_eq!(s["energy"]["pass"], true);
    assert!(s["warnings"].as_array().unwrap().is_empty());
    // 17 significant digits
    let csv = std::fs::read_to_string(r.out.join("norms.csv")).unwrap();
    let cell = csv.lines().nth(2).unwrap().split(',').nth(4).unwrap();
    let mantissa = cell.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn incompatible_shock_data_is_flagged() {
    // scalar shocks are always compatible, so use a 2x2 Lax shock with a transported second field
    let dir = tempfile::tempdir().unwrap();
    let sys = r#"{
        "n": 2,
        "flux_poly": [[{"c": 0.5, "e": [2, 0]}], [{"c": 2.0, "e": [0, 1]}]],
        "source_poly": [[{"c": -0.25, "e": [1, 0]}, {"c": 1.25, "e": [2, 0]}, {"c": -1.0, "e": [3, 0]}], [{"c": -1.0, "e": [0, 1]}]],
        "shock": {"u_minus": [1.0, 0.0], "u_plus": [0.0, 0.0], "sigma": 0.5}
    }"#;
    std::fs::write(dir.path().join("sys.json"), sys).unwrap();
    let cfg = r#"{"command": "simulate", "system": {"file": "sys.json"}, "setting": "shock",
        "simulation": {"grid": {"length": 3.0, "h": 0.01, "t_final": 0.2},
                       "initial": [{"kind": "gaussian", "center": 0.0, "width": 0.5, "direction": [0.0, 1.0]}],
                       "h2_size": 0.001}}"#;
    std::fs::write(dir.path().join("config.json"), cfg).unwrap();
    let out = dir.path().join("out");
    let o = bin().args(["simulate", "--config"]).arg(dir.path().join("config.json")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read(&out.join("summary.json"));
    assert_valid("simulation", &s);
    let w = s["warnings"].as_array().unwrap();
    assert!(w.iter().any(|m| m.as_str().unwrap().contains("not compatible")), "{w:?}");
}

#[test]
fn green_decoupled_has_no_remainder() {
    let r = run_config(
        "green",
        r#"{"command": "green", "system": {"builtin": "decoupled"}, "setting": "constant",
            "green": {"times": [0.5, 1.0, 1.5], "x_range": [-4.0, 6.0], "h": 0.02, "omega_max": 60.0,
                      "initial": [{"kind": "gaussian", "center": 0.0, "width": 0.3, "direction": [1.0, -1.0, 0.5]}],
                      "residual_samples": 3}}"#,
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = read(&r.out.join("summary.json"));
    assert_valid("green", &s);
    assert!(s["max_remainder_l1"].as_f64().unwrap() <= 1e-10, "{s}");
    assert!(s["max_resolvent_residual"].as_f64().unwrap() <= 1e-8, "{s}");
}

#[test]
fn report_runs_a_pool_of_jobs() {
    let r = run_config(
        "report",
        r#"{"command": "report", "seed": 3, "runs": [
            {"name": "a", "config": {"command": "analyze", "system": {"builtin": "appendix_3x3"}, "setting": "constant"}},
            {"name": "b", "config": {"command": "analyze", "system": {"builtin": "ibvp_2x2"}, "setting": "half_line"}},
            {"name": "c", "config": {"command": "analyze", "system": {"builtin": "nope"}, "setting": "constant"}}
        ]}"#,
        &["--jobs", "2"],
    );
    assert_eq!(r.code, 1);
    let rep = read(&r.out.join("report.json"));
    assert_valid("report", &rep);
    assert_eq!(rep["failed"], 1);
    let runs = rep["runs"].as_array().unwrap();
    assert_eq!(runs[0]["exit_code"], 0);
    assert_eq!(runs[1]["exit_code"], 0);
    assert_eq!(runs[2]["error"]["error"], "Config");
    assert!(r.out.join("a").join("analysis.json").exists());
    assert_valid("error", &read(&r.out.join("c").join("error.json")));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let v: Value = read(&path);
            assert!(v["command"].is_string(), "{}", path.display());
            count += 1;
        }
    }
    assert!(count >= 5);
}
