//! Desk-scale acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wwcontrol::control::{end_to_end, theta_full, ControlSpec, EndToEndReport, SchemeOptions, SchemeResult, ThetaOptions};
use wwcontrol::evolution::{Coefficients, Propagator, Trajectory};
use wwcontrol::ingham::{highfreq_check, ingham_gram, observability_constant, Beta, PhaseFamily};
use wwcontrol::linalg::C64;
use wwcontrol::paradiff::CutoffParams;
use wwcontrol::reduction::{commutator_report, lambda_for};
use wwcontrol::spectral::smooth_bump;
use wwcontrol::transform::{build_a, build_phi, conj_check_l, conjugation_defect, diffeo_from_c, AOptions};
use wwcontrol::waterwave::{Model, WaveState};
use wwcontrol::{Error, Field, Grid};

type Outcome = Result<(bool, String), String>;

fn err(e: Error) -> String {
    e.to_string()
}

fn real_field(rng: &mut ChaCha8Rng, n: usize, decay: f64, zero_mean: bool) -> Field {
    let mut f = Field::zeros(n);
    for k in -(n as i64)..=(n as i64) {
        let w = (1.0 + (k * k) as f64).powf(-decay / 2.0);
        f.set(k, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w);
    }
    if zero_mean {
        f.set(0, C64::new(0.0, 0.0));
    }
    f.re_part()
}

/// Random `u = a + ib` with `⟨b⟩ = 0` and `‖u‖_{L²} = 1`.
fn unit_data(seed: u64, n: usize) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = real_field(&mut rng, n, 1.0, false);
    u += &real_field(&mut rng, n, 1.0, true).scale_c(C64::new(0.0, 1.0));
    u.scale(1.0 / u.l2_norm())
}

fn omega() -> ControlSpec {
    ControlSpec::new(vec![(0.0, FRAC_PI_2)]).expect("valid window")
}

fn flat_para(g: &Grid) -> Coefficients {
    Coefficients::paradifferential(vec![Field::zeros(g.n)], vec![g.constant(C64::new(1.0, 0.0))])
}

fn mean_drift(traj: &Trajectory) -> f64 {
    let im0 = traj.values[0].get(0).im;
    traj.values.iter().map(|u| (u.get(0).im - im0).abs()).fold(0.0, f64::max)
}

struct Linear {
    residual: f64,
    runtime: f64,
    k_norm: f64,
}

fn criterion_1(k_norms: &mut Vec<f64>) -> Outcome {
    let g = Grid::standard(16).with_time(1.0, 32);
    let mut runs = Vec::new();
    for seed in 0..10 {
        let u = unit_data(seed, 16);
        let start = Instant::now();
        let (res, rep) = theta_full(&g, &flat_para(&g), &[], &omega(), &u, &ThetaOptions::default()).map_err(err)?;
        runs.push(Linear { residual: res.traj.last().l2_norm(), runtime: start.elapsed().as_secs_f64(), k_norm: rep.k_norm });
    }
    k_norms.extend(runs.iter().map(|r| r.k_norm));
    let worst = runs.iter().map(|r| r.residual).fold(0.0, f64::max);
    let slowest = runs.iter().map(|r| r.runtime).fold(0.0, f64::max);
    Ok((
        worst <= 1e-6 && slowest <= 60.0,
        format!("10 cases, max ‖u(T)‖ = {worst:.2e} (≤ 1e-6), slowest case {slowest:.1} s (≤ 60 s)"),
    ))
}

fn criterion_2() -> Outcome {
    let g = Grid::standard(16).with_time(0.25, 32);
    let mut worst = 0.0f64;
    let mut cond = 0.0f64;
    for seed in 0..10 {
        let u = unit_data(seed, 16);
        match theta_full(&g, &flat_para(&g), &[], &omega(), &u, &ThetaOptions::default()) {
            Ok((res, rep)) => {
                worst = worst.max(res.traj.last().l2_norm());
                cond = cond.max(rep.lambda_max / rep.lambda_min);
            }
            Err(e) => return Ok((false, format!("T = 0.25, case {seed} refused: {e}"))),
        }
    }
    Ok((worst <= 1e-5 && cond.is_finite(), format!("T = 0.25, max ‖u(T)‖ = {worst:.2e} (≤ 1e-5), Gramian condition {cond:.2e}")))
}

fn criterion_3() -> Outcome {
    let paired = ingham_gram(&PhaseFamily::new(Beta::zero(), (0..=16).collect(), 1.0)).map_err(err)?;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let refine = rel(paired.coarse.0, paired.lambda_min).max(rel(paired.coarse.1, paired.lambda_max));
    let full = ingham_gram(&PhaseFamily::symmetric(Beta::zero(), 16, 1.0)).map_err(err)?;
    let high = highfreq_check(&PhaseFamily::symmetric(Beta::zero(), 32, 2.0), 4).map_err(err)?;
    let n0 = high.n0_empirical.map_or(i64::MAX, |n| n);
    let pass = paired.lambda_min > 0.0 && paired.lambda_max.is_finite() && refine <= 0.01 && high.pass && n0 <= 8;
    Ok((
        pass,
        format!(
            "modes 0..=16, T = 1: λ_min = {:.4e}, λ_max = {:.4}, refinement change {refine:.1e} (≤ 1%); \
             full ±16 set λ_min = {:.1e}; T = 2: λ_min(|n| ≥ 4) − T/2 = {:.3}, N0 = {n0} (≤ 8)",
            paired.lambda_min, paired.lambda_max, full.lambda_min, high.margin
        ),
    ))
}

fn criterion_4() -> Outcome {
    let g = Grid::standard(16).with_time(1.0, 64);
    let one = g.constant(C64::new(1.0, 0.0));
    let full = observability_constant(&g, &Coefficients::flat(), &ControlSpec::full_torus(), &one, None).map_err(err)?;
    let part = observability_constant(&g, &Coefficients::flat(), &omega(), &one, None).map_err(err)?;
    let pass = full.k_obs > 0.0 && part.k_obs > 0.0 && full.excluded_at_zero == 0.0 && part.excluded_at_zero == 0.0;
    Ok((
        pass,
        format!(
            "K_obs(torus) = {:.3e}, K_obs((0,π/2)) = {:.3e}, observation of iM at t = 0: {:.1e}, {:.1e}",
            full.k_obs, part.k_obs, full.excluded_at_zero, part.excluded_at_zero
        ),
    ))
}

fn varying_coeffs(g: &Grid, seed: u64) -> Coefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, ph) = (rng.gen_range(0.01..0.04), rng.gen_range(0.01..0.04), rng.gen_range(0.0..PI));
    let c = (0..=g.kt).map(|k| g.from_fn(|x| 1.0 + a * (x - 0.5 * g.time(k)).cos())).collect();
    let v = (0..=g.kt).map(|k| g.from_fn(|x| b * (x + ph + g.time(k)).sin())).collect();
    Coefficients::paradifferential(v, c)
}

fn criterion_5(schemes: &[&SchemeResult], k_norms: &mut Vec<f64>) -> Outcome {
    let g = Grid::standard(16).with_time(1.0, 32);
    let mut drift = 0.0f64;
    for seed in 0..3 {
        let mut u = unit_data(100 + seed, 16);
        u.set(0, C64::new(0.3, 0.0));
        let (res, rep) = theta_full(&g, &varying_coeffs(&g, seed), &[], &omega(), &u, &ThetaOptions::default()).map_err(err)?;
        if res.source.iter().any(|f| !f.is_real(1e-10 * (1.0 + f.l2_norm()))) {
            return Ok((false, "source is not real".into()));
        }
        k_norms.push(rep.k_norm);
        drift = drift.max(mean_drift(&res.traj));
    }
    let scheme = schemes.iter().map(|s| mean_drift(&s.u)).fold(0.0, f64::max);
    let worst = drift.max(scheme);
    Ok((worst <= 1e-10, format!("max |Im û(0)(t) − Im û(0)(0)| = {drift:.1e} (linear), {scheme:.1e} (scheme iterates), bound 1e-10")))
}

fn criterion_6(k_norms: &[f64]) -> Outcome {
    let g = Grid::standard(128);
    let v = g.from_fn(|x| 0.1 * x.sin());
    let c = g.from_fn(|x| 1.0 + 0.05 * x.cos());
    let chi = g.from_fn(|x| smooth_bump(x, 0.0, FRAC_PI_2, PI / 4.0));
    let rep = commutator_report(&g, 2.0, 0.25, &v, &chi, Some(&c), &CutoffParams::default()).map_err(err)?;
    let k = k_norms.iter().cloned().fold(0.0, f64::max);
    let pass = (0.8..=1.2).contains(&rep.cutoff_slope) && rep.transport_variation <= 0.2 && rep.dispersion_variation <= 0.2 && k < 0.25;
    Ok((
        pass,
        format!(
            "cutoff slope {:.3} (in [0.8, 1.2]), transport variation {:.1}%, dispersion variation {:.1}% (≤ 20%), \
             max ‖𝒦‖ at selected h = {k:.3} (< 1/4)",
            rep.cutoff_slope,
            100.0 * rep.transport_variation,
            100.0 * rep.dispersion_variation
        ),
    ))
}

fn defect_slope(amp: f64, beta0: bool) -> Result<f64, String> {
    let g = Grid::standard(96).with_time(1.0, 16);
    let w: Vec<Field> =
        (0..=g.kt).map(|k| g.from_fn(|x| amp * ((x + 0.5 * g.time(k)).cos() + 0.5 * (2.0 * x - g.time(k)).sin()))).collect();
    let a = build_a(&g, &w, AOptions { beta0, ..AOptions::default() }).map_err(err)?;
    Ok(conjugation_defect(&w, &[], &a, &[4, 8, 16, 32]).map_err(err)?.1.slope)
}

fn criterion_7() -> Outcome {
    let g = Grid::standard(16);
    let d = diffeo_from_c(&g.with_time(1.0, 2), &[g.from_fn(|x| 1.0 + 0.05 * x.cos())]).map_err(err)?;
    let l = conj_check_l(&g, &d.warp(0), &[4, 8, 16, 32], 96).map_err(err)?;
    let amps = [0.02, 0.1, 0.3, 0.5, 0.7];
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for &a in &amps {
        good.push(defect_slope(a, true)?);
        bad.push(defect_slope(a, false)?);
    }
    let worst_good = good.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_bad = bad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fmt = |v: &[f64]| v.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(", ");
    Ok((
        l.slope <= 0.1 && worst_good <= 0.15 && best_bad >= 0.4,
        format!(
            "L conjugation slope {:.3} (≤ 0.1); defect slope for ‖W‖ ∝ {amps:?}: correct [{}] (≤ 0.15), β₀ = 0 [{}] (≥ 0.4)",
            l.slope,
            fmt(&good),
            fmt(&bad)
        ),
    ))
}

fn criterion_8() -> Outcome {
    let g = Grid::standard(16).with_time(1.0, 32);
    let model = Model::new(g.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let state = WaveState { eta: real_field(&mut rng, 16, 3.0, true).scale(0.002), psi: real_field(&mut rng, 16, 2.5, false).scale(0.002) };
    let u = model.to_u(&state).map_err(err)?;
    let back = model.from_u(&u).map_err(err)?;
    let uv = back.sub(&state).norm(0.0) / state.norm(0.0);

    let (n, kt) = (12, 16);
    let gp = Grid::standard(n).with_time(1.0, kt);
    let c: Vec<Field> = (0..=kt).map(|k| gp.from_fn(|x| 1.0 + 0.04 * (x - 0.7 * gp.time(k)).cos())).collect();
    let v: Vec<Field> = (0..=kt).map(|k| gp.from_fn(|x| 0.05 + 0.04 * (x + gp.time(k)).sin())).collect();
    let bundle = build_phi(&gp, &c, &v, &[], 2 * n).map_err(err)?;
    let traj = Trajectory::new(&gp, (0..=kt).map(|k| unit_data(200 + k as u64, n)).collect());
    let phi_back = bundle.inverse(&bundle.apply(&traj).map_err(err)?, n).map_err(err)?;
    let phi = traj.values.iter().zip(&phi_back.values).map(|(a, b)| (a - b).l2_norm()).fold(0.0, f64::max);

    let prop = Propagator::build(&g, &varying_coeffs(&g, 4)).map_err(err)?;
    let data = unit_data(300, 16);
    let fwd = prop.forward(&data, None);
    let bwd = prop.backward(fwd.last().expect("non-empty"), None);
    let solve = (&bwd[0] - &data).l2_norm();

    let lam = lambda_for(&g, 0.125, 6.0, Some(&g.from_fn(|x| 1.0 + 0.05 * x.cos())), &CutoffParams::default()).map_err(err)?;
    Ok((
        uv <= 1e-9 && phi <= 1e-9 && solve <= 1e-10 && lam.roundtrip <= 1e-11,
        format!(
            "from_u∘to_u {uv:.1e} (≤ 1e-9), Φ⁻¹Φ {phi:.1e} (≤ 1e-9), backward∘forward {solve:.1e} (≤ 1e-10), ΛΛ⁻¹ {:.1e} (≤ 1e-11)",
            lam.roundtrip
        ),
    ))
}

fn single_mode(eps: f64) -> Result<(SchemeResult, EndToEndReport, f64), Error> {
    let g = Grid::standard(16).with_time(1.0, 32);
    let model = Model::new(g.clone());
    let state = WaveState { eta: g.from_fn(|x| eps * x.cos()), psi: Field::zeros(16) };
    let start = Instant::now();
    let (s, r) = end_to_end(&model, &omega(), &state, &WaveState::zeros(16), 1e-4 * eps, &SchemeOptions::default())?;
    Ok((s, r, start.elapsed().as_secs_f64()))
}

fn criterion_9(small: &Result<(SchemeResult, EndToEndReport, f64), Error>) -> Outcome {
    let start = Instant::now();
    let head = match single_mode(1e-3) {
        Ok((_, r, t)) => {
            let pass = r.pass && t <= 600.0;
            (pass, format!("ε = 1e-3: residual {:.2e} (≤ 1e-7), outside ω {:.1e}, Im {:.1e}, {t:.0} s", r.residual, r.outside_support, r.imaginary_part))
        }
        Err(e) => (false, format!("ε = 1e-3 refused after {:.0} s: {e}", start.elapsed().as_secs_f64())),
    };
    let note = match small {
        Ok((_, r, t)) => format!(
            "; same pipeline at ε = 1e-5: residual {:.2e} (≤ {:.0e}), outside ω {:.1e}, Im {:.1e}, {t:.0} s",
            r.residual, r.tol, r.outside_support, r.imaginary_part
        ),
        Err(e) => format!("; ε = 1e-5 also failed: {e}"),
    };
    Ok((head.0, head.1 + &note))
}

fn criterion_10(runs: &[(f64, &Result<(SchemeResult, EndToEndReport, f64), Error>)]) -> Outcome {
    let mut text = Vec::new();
    let mut pass = true;
    let mut counts = Vec::new();
    for (eps, run) in runs {
        let (s, _, _) = run.as_ref().map_err(|e| format!("ε = {eps:e}: {e}"))?;
        let worst = s.iterations.iter().skip(1).filter_map(|it| it.ratio).fold(0.0, f64::max);
        pass &= s.converged && worst <= 0.75;
        counts.push(s.iterations.len());
        text.push(format!("ε = {eps:e}: {} iterations, max ratio from iteration 2 = {worst:.3}", s.iterations.len()));
    }
    pass &= counts.windows(2).all(|w| w[1] <= w[0]);
    Ok((pass, text.join("; ") + " (ratios ≤ 0.75, count non-increasing when ε halves)"))
}

fn main() {
    let start = Instant::now();
    let runs = [(1e-5, single_mode(1e-5)), (5e-6, single_mode(5e-6))];
    let schemes: Vec<&SchemeResult> = runs.iter().filter_map(|(_, r)| r.as_ref().ok().map(|x| &x.0)).collect();
    let mut k_norms = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "linear exact controllability", criterion_1(&mut k_norms)));
    results.push((2, "short-time control", criterion_2()));
    results.push((3, "Ingham constants", criterion_3()));
    results.push((4, "observability of the real part", criterion_4()));
    results.push((5, "mean invariant", criterion_5(&schemes, &mut k_norms)));
    results.push((6, "commutator scalings", criterion_6(&k_norms)));
    results.push((7, "conjugation cancellations", criterion_7()));
    results.push((8, "round trips", criterion_8()));
    results.push((9, "end-to-end control", criterion_9(&runs[0].1)));
    let refs: Vec<(f64, &Result<_, _>)> = runs.iter().map(|(e, r)| (*e, r)).collect();
    results.push((10, "scheme convergence", criterion_10(&refs)));
    let mut failed = 0;
    for (id, name, out) in &results {
        let (pass, text) = match out {
            Ok((p, t)) => (*p, t.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("{} {id:>2} {name}: {text}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria met in {:.0} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
