//! `simulate`, `control`, `ingham` and `observe`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wwcontrol::control::{end_to_end, SchemeOptions};
use wwcontrol::evolution::{solve_nonlinear, Coefficients, Trajectory};
use wwcontrol::ingham::{highfreq_check, ingham_gram, observability_constant, Beta, PhaseFamily};
use wwcontrol::io::{trajectory_to_bin, trajectory_to_csv, write_control_result, write_json};
use wwcontrol::linalg::C64;
use wwcontrol::waterwave::{Model, WaveState};
use wwcontrol::{Field, Grid};

use crate::config::{DataKind, RunConfig};

/// Smooth random real field with zero mean, coefficients decaying like `(1+n²)^{-decay/2}`.
pub fn random_real(rng: &mut ChaCha8Rng, n: usize, decay: f64) -> Field {
    let mut f = Field::zeros(n);
    for k in 1..=n as i64 {
        let w = (1.0 + (k * k) as f64).powf(-decay / 2.0);
        f.set(k, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w);
    }
    f.re_part()
}

pub fn initial_state(cfg: &RunConfig, grid: &Grid) -> WaveState {
    let eps = cfg.control.epsilon_amplitude;
    let n = grid.n;
    match cfg.control.data {
        DataKind::Zero => WaveState::zeros(n),
        DataKind::Mode => {
            let m = cfg.control.mode as f64;
            WaveState { eta: grid.from_fn(|x| eps * (m * x).cos()), psi: Field::zeros(n) }
        }
        DataKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.data);
            let eta = random_real(&mut rng, n, 3.0);
            let psi = random_real(&mut rng, n, 3.0);
            let unit = |f: Field| if f.l2_norm() > 0.0 { f.scale(eps / f.l2_norm()) } else { f };
            WaveState { eta: unit(eta), psi: unit(psi) }
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Free nonlinear evolution with an energy drift report.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    let grid = cfg.grid()?;
    let model = Model::new(grid.clone());
    let state0 = initial_state(cfg, &grid);
    let zero = vec![Field::zeros(grid.n); grid.kt];
    let states = solve_nonlinear(&model, &state0, &zero, SchemeOptions::default().c_cfl)?;
    let energy = states.iter().map(|s| model.energy(s)).collect::<wwcontrol::Result<Vec<f64>>>()?;
    let drift = energy.iter().map(|e| (e - energy[0]).abs()).fold(0.0, f64::max);
    let relative = if energy[0] > 0.0 { drift / energy[0] } else { 0.0 };
    let eta = Trajectory::new(&grid, states.iter().map(|s| s.eta.clone()).collect());
    let psi = Trajectory::new(&grid, states.iter().map(|s| s.psi.clone()).collect());
    write(&out.join("eta.csv"), trajectory_to_csv(&eta))?;
    write(&out.join("psi.csv"), trajectory_to_csv(&psi))?;
    write(&out.join("eta.bin"), trajectory_to_bin(&eta))?;
    write(&out.join("psi.bin"), trajectory_to_bin(&psi))?;
    let report = json!({
        "t": eta.t,
        "energy": energy,
        "energy_drift": drift,
        "relative_energy_drift": relative,
        "final_norm": states.last().expect("non-empty").norm(0.0),
    });
    write_json(&out.join("report.json"), &report)?;
    Ok((true, json!({ "relative_energy_drift": relative })))
}

/// Steers the configured initial wave to rest; passes iff the independent
/// nonlinear verification meets `tolerances.residual · ε`.
pub fn control(cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    let grid = cfg.grid()?;
    let spec = cfg.spec()?;
    let model = Model::new(grid.clone());
    let state = initial_state(cfg, &grid);
    let tol = cfg.control.tolerances.residual * cfg.control.epsilon_amplitude;
    let opts = SchemeOptions { tol: cfg.control.tolerances.scheme, n_max: cfg.control.n_max, ..SchemeOptions::default() };
    let (scheme, rep) = match end_to_end(&model, &spec, &state, &WaveState::zeros(grid.n), tol, &opts) {
        Ok(r) => r,
        Err(e) => {
            fs::create_dir_all(out)?;
            let report = json!({ "pass": false, "error": e.to_string(), "tol": tol });
            write_json(&out.join("report.json"), &report)?;
            return Ok((false, report));
        }
    };
    let last = scheme.iterations.last();
    let mut report = serde_json::to_value(&rep)?;
    report["epsilon_amplitude"] = json!(cfg.control.epsilon_amplitude);
    report["lambda_min"] = last.map_or(Value::Null, |it| finite(it.lambda_min));
    report["lambda_max"] = last.map_or(Value::Null, |it| finite(it.lambda_max));
    let mid: Vec<f64> = (0..grid.kt).map(|k| (k as f64 + 0.5) * grid.dt()).collect();
    let control = Trajectory { t: mid.clone(), values: scheme.p_fields.clone() };
    write_control_result(out, &control, &scheme.u, &report)?;
    let mut samples = String::from("k,t,x,p\n");
    for (k, p) in scheme.p_ext.iter().enumerate() {
        for (j, v) in p.iter().enumerate() {
            writeln!(samples, "{k},{:e},{:e},{v:e}", mid[k], grid.x(j))?;
        }
    }
    write(&out.join("pressure.csv"), samples)?;
    let summary = json!({ "residual": rep.residual, "tol": tol, "converged": rep.converged });
    Ok((rep.pass, summary))
}

fn beta_of(delta: f64) -> Beta {
    if delta == 0.0 {
        Beta::zero()
    } else {
        Beta::Sine { amp: delta, freq: 1.0, phase: 0.0 }
    }
}

fn observability(cfg: &RunConfig) -> Result<wwcontrol::ingham::Observability> {
    let grid = cfg.grid()?;
    let spec = cfg.spec()?;
    let m = spec.weight(&grid);
    Ok(observability_constant(&grid, &Coefficients::flat(), &spec, &m, None)?)
}

/// Ingham Gram matrix, high-frequency check and observability constant.
pub fn ingham(cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    let ic = &cfg.ingham;
    let beta = beta_of(ic.delta);
    let fam = PhaseFamily::new(beta.clone(), (0..=ic.n_max).collect(), ic.t);
    let gram = ingham_gram(&fam)?;
    let high = highfreq_check(&PhaseFamily::symmetric(beta, 2 * ic.n_max, ic.t_high), ic.n_cut)?;
    let obs = observability(cfg)?;
    let refine = ((gram.coarse.0 - gram.lambda_min) / gram.lambda_min).abs().max(((gram.coarse.1 - gram.lambda_max) / gram.lambda_max).abs());
    let pass = gram.lambda_min > 0.0 && gram.lambda_max.is_finite() && refine <= 0.01 && high.pass && obs.observable;
    let report = json!({
        "lambda_min": gram.lambda_min,
        "lambda_max": gram.lambda_max,
        "N0_empirical": high.n0_empirical,
        "K_obs": obs.k_obs,
        "refinement_change": refine,
        "panels": gram.panels,
        "highfreq": high,
        "observability": obs,
        "pass": pass,
    });
    let mut csv = String::from("n,m,re,im\n");
    for (i, n) in gram.modes.iter().enumerate() {
        for (j, m) in gram.modes.iter().enumerate() {
            let z = gram.k[(i, j)];
            writeln!(csv, "{n},{m},{:e},{:e}", z.re, z.im)?;
        }
    }
    write(&out.join("gram.csv"), csv)?;
    write_json(&out.join("report.json"), &report)?;
    Ok((pass, json!({ "lambda_min": gram.lambda_min, "K_obs": obs.k_obs })))
}

/// Observability constant of the flat flow on the configured window.
pub fn observe(cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    let obs = observability(cfg)?;
    let report = serde_json::to_value(&obs)?;
    write_json(&out.join("report.json"), &report)?;
    Ok((obs.observable, json!({ "K_obs": obs.k_obs })))
}
