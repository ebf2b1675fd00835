use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn out_dir(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&d);
    d
}

fn command() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wavectl"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("WAVECTL_")) {
        c.env_remove(k);
    }
    c
}

fn wavectl(args: &[&str], out: &Path) -> Output {
    command().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

const SMALL: [&str; 4] = ["--set", "grid.N=8", "--set", "grid.K_t=16"];

#[test]
fn bad_schema_exits_2_with_message() {
    let d = out_dir("bad_schema");
    for set in ["grid.N=-1", "control.unknown=1", "physics.b=\"deep\"", "control.omega=[[2,1]]"] {
        let o = wavectl(&["simulate", "--set", set], &d);
        assert_eq!(code(&o), 2, "{set}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"), "{set}");
    }
    let cfg = d.with_extension("json");
    fs::write(&cfg, r#"{"grid": {"N": 8, "typo": 1}}"#).unwrap();
    let o = wavectl(&["simulate", "--config", cfg.to_str().unwrap()], &d);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_suite_exits_2() {
    let d = out_dir("unknown_suite");
    assert_eq!(code(&wavectl(&["verify", "nonsense"], &d)), 2);
    assert_eq!(code(&wavectl(&["frobnicate"], &d)), 2);
}

#[test]
fn zero_data_gives_zero_trajectory() {
    let d = out_dir("sim_zero");
    let o = wavectl(&["simulate", "--set", "control.data=zero"], &d);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(d.join("eta.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0e0,0e0")));
    let r = json(d.join("report.json"));
    assert!(r["energy"].as_array().unwrap().iter().all(|e| e.as_f64() == Some(0.0)));
}

#[test]
fn simulate_reports_energy_drift() {
    let d = out_dir("sim_eps");
    let o = wavectl(&["simulate", "--set", "control.epsilon_amplitude=1e-3"], &d);
    assert_eq!(code(&o), 0);
    let r = json(d.join("report.json"));
    // η = ε cos x, ψ = 0: potential (g/2)·2|ε/2|² plus surface (1/2)·2|ε/2|² = ε²/2
    let e0 = r["energy"][0].as_f64().unwrap();
    assert!((e0 / 0.5e-6 - 1.0).abs() < 1e-5, "{e0}");
    assert!(r["relative_energy_drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(fs::read(d.join("eta.bin")).unwrap().len(), 8 * (2 + 33 * (1 + 2 * 33)));
}

#[test]
fn zero_to_zero_control_exits_0_with_zero_pressure() {
    let d = out_dir("ctl_zero");
    let o = wavectl(&["control", "--set", "control.data=zero"], &d);
    assert_eq!(code(&o), 0);
    let p = fs::read_to_string(d.join("pressure.csv")).unwrap();
    assert!(p.lines().skip(1).all(|l| l.ends_with(",0e0")));
    for f in ["control.csv", "state.csv", "report.json", "manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
}

#[test]
fn default_epsilon_control_meets_tolerance() {
    let d = out_dir("ctl_eps");
    let mut args = vec!["control"];
    args.extend(SMALL);
    let o = wavectl(&args, &d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(d.join("report.json"));
    let (res, tol) = (r["residual"].as_f64().unwrap(), r["tol"].as_f64().unwrap());
    assert!(res <= tol && tol == 1e-9, "{res} {tol}");
    assert_eq!(r["outside_support"].as_f64(), Some(0.0));
}

#[test]
fn unreachable_tolerance_exits_1() {
    let d = out_dir("ctl_tol0");
    let mut args = vec!["control", "--set", "control.tolerances.residual=0"];
    args.extend(SMALL);
    let o = wavectl(&args, &d);
    assert_eq!(code(&o), 1);
    assert!(json(d.join("report.json"))["residual"].as_f64().unwrap() > 0.0);
}

#[test]
fn ingham_suite_passes() {
    let d = out_dir("verify_ingham");
    let o = wavectl(&["verify", "ingham"], &d);
    assert_eq!(code(&o), 0);
    let r = json(d.join("report.json"));
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == Value::Bool(true)));
}

#[test]
fn transform_negative_control_fails() {
    let d = out_dir("verify_transform_neg");
    let o = wavectl(&["verify", "transform", "--set", "transform.beta0=false"], &d);
    assert_eq!(code(&o), 1);
    let r = json(d.join("report.json"));
    let failed: Vec<&str> =
        r["checks"].as_array().unwrap().iter().filter(|c| c["pass"] == Value::Bool(false)).map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(failed, ["cancellation_defect_order"]);
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let d = out_dir("repeat");
    let args = ["simulate", "--set", "control.data=random", "--seed", "7", "--set", "grid.N=8"];
    let snapshot = |d: &Path| {
        let mut files: Vec<(String, Vec<u8>)> =
            fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).map(|p| (p.display().to_string(), fs::read(&p).unwrap())).collect();
        files.sort();
        files
    };
    assert_eq!(code(&wavectl(&args, &d)), 0);
    let first = snapshot(&d);
    assert_eq!(code(&wavectl(&args, &d)), 0);
    assert_eq!(first, snapshot(&d));
    let other = out_dir("repeat_other_seed");
    let mut args8 = args;
    args8[4] = "8";
    assert_eq!(code(&wavectl(&args8, &other)), 0);
    assert_ne!(fs::read(d.join("eta.csv")).unwrap(), fs::read(other.join("eta.csv")).unwrap());
}

#[test]
fn manifest_echoes_resolved_config() {
    let d = out_dir("manifest");
    let o = command()
        .args(["observe", "--seed", "42", "--out"])
        .arg(&d)
        .env("WAVECTL_CONTROL__T", "2.0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m = json(d.join("manifest.json"));
    assert_eq!(m["command"], "observe");
    assert_eq!(m["config"]["seeds"]["data"], 42);
    assert_eq!(m["config"]["control"]["T"], 2.0);
    assert_eq!(m["config"]["grid"]["M_x"], Value::Null);
    assert!(m["versions"]["wwcontrol"].is_string());
    assert!(json(d.join("report.json"))["k_obs"].as_f64().unwrap() > 0.0);
}
