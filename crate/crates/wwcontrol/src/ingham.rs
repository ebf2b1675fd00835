//! Ingham-type bounds for the perturbed phases `μ_n(t) = sign(n)[ℓ(n)t + β(t)|n|^{1/2}]`
//! and observability constants of the transport-form equations.
//!
//! Every constant is measured as an extreme eigenvalue of a Gram matrix.

use gauss_quad::GaussLegendre;
use serde::Serialize;

use crate::control::ControlSpec;
use crate::error::{Error, Result};
use crate::evolution::{Coefficients, Mode, Propagator};
use crate::linalg::{herm_eigenvalues, orth_complement, realify, sym_eigenvalues, to_real, CMat, RMat, C64, I};
use crate::spectral::{Depth, Field, Grid};

/// Time perturbation `β` of the phases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Beta {
    Const(f64),
    /// `amp · sin(freq·t + phase)`.
    Sine { amp: f64, freq: f64, phase: f64 },
    Sum(Vec<Beta>),
}

impl Beta {
    pub fn zero() -> Self {
        Beta::Const(0.0)
    }

    /// `∂_t^k β(t)`.
    pub fn deriv(&self, k: u32, t: f64) -> f64 {
        match self {
            Beta::Const(c) => {
                if k == 0 {
                    *c
                } else {
                    0.0
                }
            }
            Beta::Sine { amp, freq, phase } => {
                let a = freq * t + phase;
                let s = match k % 4 {
                    0 => a.sin(),
                    1 => a.cos(),
                    2 => -a.sin(),
                    _ => -a.cos(),
                };
                amp * freq.powi(k as i32) * s
            }
            Beta::Sum(parts) => parts.iter().map(|b| b.deriv(k, t)).sum(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.deriv(0, t)
    }
}

/// Phases `μ_n`, `n ∈ S`, on `[0, T]`.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseFamily {
    pub beta: Beta,
    pub modes: Vec<i64>,
    pub t_end: f64,
    pub g: f64,
    pub depth: Depth,
}

const SUP_SAMPLES: usize = 2001;

fn sup_on(t_end: f64, f: impl Fn(f64) -> f64) -> f64 {
    (0..SUP_SAMPLES)
        .map(|j| f(t_end * j as f64 / (SUP_SAMPLES - 1) as f64).abs())
        .fold(0.0, f64::max)
}

impl PhaseFamily {
    /// `g = 1`, `b = 1`.
    pub fn new(beta: Beta, modes: Vec<i64>, t_end: f64) -> Self {
        Self { beta, modes, t_end, g: 1.0, depth: Depth::Finite(1.0) }
    }

    /// All modes `|n| ≤ n_max`.
    pub fn symmetric(beta: Beta, n_max: i64, t_end: f64) -> Self {
        Self::new(beta, (-n_max..=n_max).collect(), t_end)
    }

    fn grid(&self) -> Grid {
        Grid { g: self.g, depth: self.depth, ..Grid::standard(1) }
    }

    pub fn ell(&self, n: i64) -> f64 {
        self.grid().ell(n as f64)
    }

    /// `½ tanh^{1/2}(b)`.
    pub fn rate_bound(&self) -> f64 {
        match self.depth {
            Depth::Finite(b) => 0.5 * b.tanh().sqrt(),
            Depth::Infinite => 0.5,
        }
    }

    /// `sup |∂_t^k β|` sampled on `[0, T]`.
    pub fn beta_sup(&self, k: u32) -> f64 {
        sup_on(self.t_end, |t| self.beta.deriv(k, t))
    }

    /// Refuses `β` with `sup|∂_tβ| > ½ tanh^{1/2}(b)`, a non-positive `T` or repeated modes.
    pub fn check(&self) -> Result<()> {
        if !(self.t_end > 0.0) {
            return Err(Error::Domain(format!("T = {} must be positive", self.t_end)));
        }
        let mut m = self.modes.clone();
        m.sort_unstable();
        m.dedup();
        if m.len() != self.modes.len() || m.is_empty() {
            return Err(Error::Domain("mode set must be non-empty without repetitions".into()));
        }
        let rate = self.beta_sup(1);
        if rate > self.rate_bound() {
            return Err(Error::Smallness { what: "sup|∂_tβ|", value: rate, bound: self.rate_bound() });
        }
        Ok(())
    }

    pub fn restrict(&self, keep: impl Fn(i64) -> bool) -> Self {
        Self { modes: self.modes.iter().cloned().filter(|&n| keep(n)).collect(), ..self.clone() }
    }
}

/// `μ_n(t)`.
pub fn phases(fam: &PhaseFamily, n: i64, t: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (n.signum() as f64) * (fam.ell(n) * t + fam.beta.value(t) * (n.unsigned_abs() as f64).sqrt())
}

/// `∂_t^k μ_n(t)`, `k ≥ 1`.
pub fn phase_deriv(fam: &PhaseFamily, n: i64, k: u32, t: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let lin = if k == 1 { fam.ell(n) } else { 0.0 };
    (n.signum() as f64) * (lin + fam.beta.deriv(k, t) * (n.unsigned_abs() as f64).sqrt())
}

/// `K_{nm} = ∫₀ᵀ e^{i(μ_n - μ_m)} dt` and its extreme eigenvalues.
#[derive(Clone, Debug)]
pub struct InghamGram {
    pub modes: Vec<i64>,
    pub k: CMat,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Composite Gauss panels of the accepted quadrature.
    pub panels: usize,
    /// Max-entry change against the quadrature with half the panels.
    pub quad_change: f64,
    /// `λ_min` and `λ_max` with half the panels.
    pub coarse: (f64, f64),
}

const GAUSS_ORDER: usize = 20;
const QUAD_TOL: f64 = 1e-10;
const MAX_PANELS: usize = 1 << 16;

fn gram_with(fam: &PhaseFamily, panels: usize, rule: &GaussLegendre) -> CMat {
    let h = fam.t_end / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let a = p as f64 * h;
            rule.iter().map(move |(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
        })
        .collect();
    let e = CMat::from_fn(fam.modes.len(), nodes.len(), |i, q| {
        let (t, w) = nodes[q];
        C64::from_polar(w.sqrt(), phases(fam, fam.modes[i], t))
    });
    let k = &e * e.adjoint();
    (&k + k.adjoint()) * C64::new(0.5, 0.0)
}

fn extremes(k: &CMat) -> (f64, f64) {
    let ev = herm_eigenvalues(k);
    (
        ev.iter().cloned().fold(f64::INFINITY, f64::min),
        ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Composite Gauss quadrature, doubling the panels until two successive
/// matrices agree to `1e-10` entrywise.
pub fn ingham_gram(fam: &PhaseFamily) -> Result<InghamGram> {
    fam.check()?;
    let rule = GaussLegendre::new(GAUSS_ORDER.try_into().expect("positive order"));
    let rate = fam
        .modes
        .iter()
        .map(|&n| fam.ell(n) + fam.beta_sup(1) * (n.unsigned_abs() as f64).sqrt())
        .fold(0.0, f64::max);
    let mut panels = ((fam.t_end * 2.0 * rate / 8.0).ceil() as usize).max(2);
    let mut prev = gram_with(fam, panels, &rule);
    loop {
        let next = gram_with(fam, 2 * panels, &rule);
        let change = (&next - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if change < QUAD_TOL {
            let (lambda_min, lambda_max) = extremes(&next);
            return Ok(InghamGram {
                modes: fam.modes.clone(),
                coarse: extremes(&prev),
                k: next,
                lambda_min,
                lambda_max,
                panels: 2 * panels,
                quad_change: change,
            });
        }
        panels *= 2;
        if panels > MAX_PANELS {
            return Err(Error::NoConvergence { what: "Ingham Gram quadrature", iterations: panels, last: change });
        }
        prev = next;
    }
}

/// Outcome of [`highfreq_check`].
#[derive(Clone, Debug, Serialize)]
pub struct HighFreqReport {
    pub n_cut: i64,
    /// `λ_min(K) - T/2` on `|n| ≥ N_cut`.
    pub margin: f64,
    pub lambda_min: f64,
    pub pass: bool,
    /// Smallest cutoff with a non-negative margin, if any.
    pub n0_empirical: Option<i64>,
    /// `(n, Σ_{m≠n} e(n,m))`: the integration-by-parts bounds on the off-diagonal row sums.
    pub row_sums: Vec<(i64, f64)>,
}

/// Integration-by-parts bound `e(n,m)` on `|K_{nm}|` for unit amplitudes.
pub fn offdiag_bound(fam: &PhaseFamily, n: i64, m: i64) -> f64 {
    let mut s = [0.0f64; 4];
    for j in 0..SUP_SAMPLES {
        let t = fam.t_end * j as f64 / (SUP_SAMPLES - 1) as f64;
        let p = 1.0 / (phase_deriv(fam, n, 1, t) - phase_deriv(fam, m, 1, t));
        let h2 = phase_deriv(fam, n, 2, t) - phase_deriv(fam, m, 2, t);
        let h3 = phase_deriv(fam, n, 3, t) - phase_deriv(fam, m, 3, t);
        s[0] = s[0].max(p.abs());
        s[1] = s[1].max((h2 * p.powi(3)).abs());
        s[2] = s[2].max((h2 * h2 * p.powi(4)).abs());
        s[3] = s[3].max((h3 * p.powi(3)).abs());
    }
    2.0 * s[0] + 2.0 * s[1] + fam.t_end * (3.0 * s[2] + s[3])
}

/// `λ_min(K)` on `|n| ≥ N_cut` against `T/2`.
///
/// Refuses `sup|∂_t²β| > 1`.
pub fn highfreq_check(fam: &PhaseFamily, n_cut: i64) -> Result<HighFreqReport> {
    let curv = fam.beta_sup(2);
    if curv > 1.0 {
        return Err(Error::Smallness { what: "sup|∂_t²β|", value: curv, bound: 1.0 });
    }
    let full = ingham_gram(fam)?;
    let half = 0.5 * fam.t_end;
    let lmin_from = |cut: i64| -> Option<f64> {
        let idx: Vec<usize> = (0..full.modes.len()).filter(|&i| full.modes[i].abs() >= cut).collect();
        if idx.is_empty() {
            return None;
        }
        let sub = CMat::from_fn(idx.len(), idx.len(), |a, b| full.k[(idx[a], idx[b])]);
        Some(extremes(&sub).0)
    };
    let lambda_min = lmin_from(n_cut).ok_or_else(|| Error::Domain(format!("no modes with |n| ≥ {n_cut}")))?;
    let top = fam.modes.iter().map(|n| n.abs()).max().unwrap_or(0);
    let n0_empirical = (0..=top).find(|&c| lmin_from(c).is_some_and(|l| l >= half));
    let kept: Vec<i64> = fam.modes.iter().cloned().filter(|n| n.abs() >= n_cut).collect();
    let row_sums = kept
        .iter()
        .map(|&n| (n, kept.iter().filter(|&&m| m != n).map(|&m| offdiag_bound(fam, n, m)).sum()))
        .collect();
    Ok(HighFreqReport { n_cut, margin: lambda_min - half, lambda_min, pass: lambda_min >= half, n0_empirical, row_sums })
}

/// Outcome of [`separation_check`].
#[derive(Clone, Debug, Serialize)]
pub struct Separation {
    /// `min_t |μ'_n - μ'_m|`.
    pub min_gap: f64,
    /// `½ tanh^{1/2}(b) √max(n,m) |n-m|`.
    pub bound: f64,
    pub pass: bool,
}

/// Sampled check of `min_t|μ'_n - μ'_m| ≥ ½ tanh^{1/2}(b) √max(n,m) |n-m|` for `n, m ≥ 0`.
pub fn separation_check(fam: &PhaseFamily, n: i64, m: i64) -> Result<Separation> {
    if n < 0 || m < 0 || n == m {
        return Err(Error::Domain(format!("separation needs distinct n, m ≥ 0, got ({n}, {m})")));
    }
    let min_gap = (0..SUP_SAMPLES)
        .map(|j| {
            let t = fam.t_end * j as f64 / (SUP_SAMPLES - 1) as f64;
            (phase_deriv(fam, n, 1, t) - phase_deriv(fam, m, 1, t)).abs()
        })
        .fold(f64::INFINITY, f64::min);
    let bound = fam.rate_bound() * (n.max(m) as f64).sqrt() * (n - m).abs() as f64;
    Ok(Separation { min_gap, bound, pass: min_gap >= bound })
}

/// `(c_n, ζ_n(t))` of the splitting `θ_n = c_n + ζ_n` relative to the mode `N`
/// (`n, N > 0`), by Gauss quadrature in `η ∈ [0, τ]`.
pub fn claim_amplitudes(fam: &PhaseFamily, n: i64, big_n: i64, tau: f64, t: f64) -> (C64, C64) {
    let rule = GaussLegendre::new(GAUSS_ORDER.try_into().expect("positive order"));
    let dl = fam.ell(n) - fam.ell(big_n);
    let ds = (n as f64).sqrt() - (big_n as f64).sqrt();
    let panels = ((dl.abs() * tau / 4.0).ceil() as usize).max(1);
    let h = tau / panels as f64;
    let mut c = C64::new(0.0, 0.0);
    let mut z = C64::new(0.0, 0.0);
    for p in 0..panels {
        for (x, w) in rule.iter() {
            let eta = p as f64 * h + 0.5 * h * (x + 1.0);
            let w = 0.5 * h * w;
            let e = C64::from_polar(1.0, dl * eta);
            c += (e - 1.0) * w;
            let db = fam.beta.value(t + eta) - fam.beta.value(t);
            z += e * (C64::from_polar(1.0, db * ds) - 1.0) * w;
        }
    }
    (c, z)
}

/// `M(ζ) = sup‖ζ_n‖ + sup‖∂_tζ_n‖/√(1+|n|) + sup‖∂_t²ζ_n‖/(1+|n|)` for the amplitudes of
/// [`claim_amplitudes`], derivatives by centred differences on `t ∈ [0, T-τ]`.
pub fn claim_m_zeta(fam: &PhaseFamily, big_n: i64, tau: f64, samples: usize) -> f64 {
    let span = (fam.t_end - tau).max(0.0);
    let dt = 1e-3 * span.max(1e-3);
    let mut s = [0.0f64; 3];
    for &n in fam.modes.iter().filter(|&&n| n > 0 && n != big_n) {
        let w = 1.0 + n as f64;
        for j in 0..samples {
            let t = dt + (span - 2.0 * dt) * j as f64 / (samples.max(2) - 1) as f64;
            let zm = claim_amplitudes(fam, n, big_n, tau, t - dt).1;
            let z0 = claim_amplitudes(fam, n, big_n, tau, t).1;
            let zp = claim_amplitudes(fam, n, big_n, tau, t + dt).1;
            s[0] = s[0].max(z0.norm());
            s[1] = s[1].max(((zp - zm) / (2.0 * dt)).norm() / w.sqrt());
            s[2] = s[2].max(((zp - z0 * 2.0 + zm) / (dt * dt)).norm() / w);
        }
    }
    s.iter().sum()
}

/// Outcome of [`observability_constant`].
#[derive(Clone, Debug, Serialize)]
pub struct Observability {
    /// `λ_min(OᵀO)` on `L²_M`.
    pub k_obs: f64,
    pub lambda_max: f64,
    pub observable: bool,
    /// `‖O(iM)‖`, with `O` unrestricted.
    pub excluded_observation: f64,
    /// `‖Re(iM)‖` sampled on `ω` at `t = 0`.
    pub excluded_at_zero: f64,
}

const K_OBS_FLOOR: f64 = 1e-12;

/// `K_obs = λ_min(OᵀO)` with `O: v₀ ↦ Re(A v)` sampled on `[0,T] × ω`, restricted to `L²_M`.
///
/// Time nodes carry trapezoid weights and space samples the weight `1/M_x`, so
/// `‖Ov₀‖² ≈ ∫₀ᵀ (1/2π)∫_ω |Re Av|²`. `a = None` means `A = I`.
pub fn observability_constant(
    grid: &Grid,
    coeffs: &Coefficients,
    spec: &ControlSpec,
    m: &Field,
    a: Option<&CMat>,
) -> Result<Observability> {
    if !matches!(coeffs.mode, Mode::Transport | Mode::Flat) {
        return Err(Error::Domain("observability needs transport coefficients".into()));
    }
    let m = m.resize(grid.n);
    let prop = Propagator::build(grid, coeffs)?;
    let d = grid.dim();
    let xs: Vec<usize> = (0..grid.mx).filter(|&j| spec.contains(grid.x(j))).collect();
    if xs.is_empty() {
        return Err(Error::Domain("ω contains no sample point".into()));
    }
    // Re u(x_j) = Σ Re û(n) cos(n x_j) - Im û(n) sin(n x_j)
    let sample = RMat::from_fn(xs.len(), 2 * d, |r, c| {
        let x = grid.x(xs[r]);
        let n = grid.mode(c % d) as f64;
        if c < d {
            (n * x).cos()
        } else {
            -(n * x).sin()
        }
    });
    let amap = a.map(realify).unwrap_or_else(|| RMat::identity(2 * d, 2 * d));
    let wx = 1.0 / grid.mx as f64;
    let mut phi = RMat::identity(2 * d, 2 * d);
    let mut gram = RMat::zeros(2 * d, 2 * d);
    for k in 0..=grid.kt {
        if k > 0 {
            phi = realify(&prop.steps[k - 1]) * phi;
        }
        let wt = if k == 0 || k == grid.kt { 0.5 * grid.dt() } else { grid.dt() };
        let rows = &sample * &amap * &phi;
        gram += rows.transpose() * rows * (wt * wx);
    }
    let im = to_real(&m.scale_c(I).coeffs);
    if im.norm() == 0.0 {
        return Err(Error::Domain("M must not vanish".into()));
    }
    let excluded = im.normalize();
    let excluded_observation = (excluded.transpose() * &gram * &excluded)[(0, 0)].max(0.0).sqrt();
    let excluded_at_zero = (&sample * &amap * &im).norm() * wx.sqrt();
    let basis = orth_complement(&im);
    let restricted = basis.transpose() * &gram * &basis;
    let ev = sym_eigenvalues(&restricted);
    let k_obs = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda_max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Observability { k_obs, lambda_max, observable: k_obs > K_OBS_FLOOR, excluded_observation, excluded_at_zero })
}

/// `sup_u |⟨(A-I)u⟩| / (δ‖u‖)`: the norm of the mean functional of `A - I` over `δ`.
pub fn mean_defect_constant(a: &CMat, grid: &Grid, delta: f64) -> f64 {
    let j0 = grid.idx(0);
    let row: f64 = (0..grid.dim())
        .map(|j| {
            let v = a[(j0, j)] - if j == j0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            v.norm_sqr()
        })
        .sum();
    row.sqrt() / delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::spectral::MultiplierKind;
    use proptest::prelude::*;

    fn sine(amp: f64) -> Beta {
        Beta::Sine { amp, freq: 1.0, phase: 0.0 }
    }

    #[test]
    fn phase_values() {
        let f = PhaseFamily::symmetric(Beta::zero(), 4, 1.0);
        assert!((phases(&f, 1, 1.0) - 1.2341752).abs() < 5e-8);
        assert!((phases(&f, 1, 1.0) - (2.0 * 1f64.tanh()).sqrt()).abs() < 1e-15);
        assert_eq!(phases(&f, 0, 0.7), 0.0);
    }

    proptest! {
        #[test]
        fn phases_are_odd(n in 1i64..40, t in 0.0f64..3.0, amp in -0.4f64..0.4, w in 0.0f64..3.0) {
            let f = PhaseFamily::new(Beta::Sine { amp, freq: w, phase: 0.3 }, vec![n, -n], 3.0);
            prop_assert!((phases(&f, -n, t) + phases(&f, n, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_gram_is_t() {
        let f = PhaseFamily::new(sine(0.2), vec![5], 1.3);
        let k = ingham_gram(&f).unwrap();
        assert!((k.k[(0, 0)].re - 1.3).abs() < 1e-12 && k.k[(0, 0)].im.abs() < 1e-14);
        assert!((k.lambda_min - 1.3).abs() < 1e-12);
        let h = highfreq_check(&f, 0).unwrap();
        assert!(h.pass && (h.lambda_min - 1.3).abs() < 1e-12);
    }

    #[test]
    fn unperturbed_entries_match_closed_form() {
        let t = 1.0;
        let f = PhaseFamily::symmetric(Beta::zero(), 6, t);
        let k = ingham_gram(&f).unwrap();
        for (i, &n) in f.modes.iter().enumerate() {
            for (j, &m) in f.modes.iter().enumerate() {
                let d = phases(&f, n, 1.0) - phases(&f, m, 1.0);
                let exact = if i == j { C64::new(t, 0.0) } else { (C64::from_polar(1.0, d * t) - 1.0) / C64::new(0.0, d) };
                assert!((k.k[(i, j)] - exact).norm() < 1e-10);
                if i != j {
                    assert!(k.k[(i, j)].norm() <= 2.0 / d.abs() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gram_is_hermitian_psd_and_refinement_stable() {
        // one mode per ± pair; with both signs the low frequencies crowd below roundoff at T = 1
        let f = PhaseFamily::new(Beta::zero(), (0..=16).collect(), 1.0);
        let k = ingham_gram(&f).unwrap();
        assert!((&k.k - k.k.adjoint()).iter().all(|z| z.norm() < 1e-12));
        assert!(k.lambda_min > 0.0 && k.lambda_max.is_finite());
        assert!(k.quad_change < 1e-10);
        assert!((k.coarse.0 - k.lambda_min).abs() <= 0.01 * k.lambda_min);
        assert!((k.coarse.1 - k.lambda_max).abs() <= 0.01 * k.lambda_max);
        // regression baseline
        assert!((k.lambda_min / 2.633_089e-9 - 1.0).abs() < 1e-4, "{}", k.lambda_min);
    }

    #[test]
    fn constant_shift_of_beta_keeps_lambda_min() {
        let a = PhaseFamily::symmetric(sine(0.3), 10, 1.0);
        let b = PhaseFamily { beta: Beta::Sum(vec![sine(0.3), Beta::Const(0.8)]), ..a.clone() };
        let (ka, kb) = (ingham_gram(&a).unwrap(), ingham_gram(&b).unwrap());
        assert!((ka.lambda_min - kb.lambda_min).abs() < 1e-10);
        assert!((ka.lambda_max - kb.lambda_max).abs() < 1e-10);
    }

    #[test]
    fn fast_beta_is_refused() {
        let f = PhaseFamily::symmetric(Beta::Sine { amp: 0.5, freq: 2.0, phase: 0.0 }, 4, 1.0);
        assert!(matches!(ingham_gram(&f), Err(Error::Smallness { .. })));
        let curved = PhaseFamily::symmetric(Beta::Sine { amp: 0.2, freq: 2.2, phase: 1.0 }, 4, 1.0);
        assert!(matches!(highfreq_check(&curved, 1), Err(Error::Smallness { .. })));
    }

    #[test]
    fn high_frequencies_pass_at_t2() {
        let f = PhaseFamily::symmetric(Beta::zero(), 32, 2.0);
        let h = highfreq_check(&f, 4).unwrap();
        assert!(h.pass && h.margin >= 0.0, "{h:?}");
        let n0 = h.n0_empirical.unwrap();
        assert!(n0 <= 8);
        assert!(h.row_sums.iter().all(|(_, s)| s.is_finite() && *s > 0.0));
    }

    #[test]
    fn empirical_n0_grows_with_delta() {
        let mut last = 0;
        for delta in [0.0, 0.2, 0.4] {
            let f = PhaseFamily::symmetric(sine(delta), 20, 2.0);
            let n0 = highfreq_check(&f, 0).unwrap().n0_empirical.unwrap();
            assert!(n0 >= last, "δ = {delta}: {n0} < {last}");
            last = n0;
        }
    }

    #[test]
    fn separation_example_and_sweep() {
        let f = PhaseFamily::new(Beta::zero(), vec![], 1.0);
        let s = separation_check(&f, 2, 1).unwrap();
        assert!((s.min_gap - 1.8707043).abs() < 2e-7);
        assert!((s.min_gap - (f.ell(2) - f.ell(1))).abs() < 1e-14);
        assert!((s.bound - 0.617_09).abs() < 1e-5);
        assert!(s.pass);
        assert!(separation_check(&f, 3, 3).is_err());
        let adm = PhaseFamily::new(sine(0.43), vec![], 2.0);
        for n in 0..=32 {
            for m in 0..n {
                assert!(separation_check(&adm, n, m).unwrap().pass, "({n}, {m})");
            }
        }
    }

    #[test]
    fn claim_splitting() {
        let f = PhaseFamily::new(Beta::zero(), (1..=8).collect(), 2.0);
        let tau = 0.3;
        let (c, z) = claim_amplitudes(&f, 5, 3, tau, 0.4);
        let d = f.ell(5) - f.ell(3);
        let exact = (C64::from_polar(1.0, d * tau) - 1.0) / C64::new(0.0, d) - tau;
        assert!((c - exact).norm() < 1e-13 && z.norm() < 1e-15);
        assert_eq!(claim_m_zeta(&f, 3, tau, 5), 0.0);
        let small = claim_m_zeta(&PhaseFamily { beta: sine(0.05), ..f.clone() }, 3, tau, 5);
        let large = claim_m_zeta(&PhaseFamily { beta: sine(0.2), ..f.clone() }, 3, tau, 5);
        assert!(small > 0.0 && large > small);
    }

    fn obs(grid: &Grid, spec: &ControlSpec, a: Option<&CMat>) -> Observability {
        observability_constant(grid, &Coefficients::flat(), spec, &grid.constant(ONE), a).unwrap()
    }

    #[test]
    fn full_torus_is_observable_and_im_direction_is_blind() {
        let g = Grid::standard(8).with_time(1.0, 64);
        let o = obs(&g, &ControlSpec::full_torus(), None);
        assert!(o.observable && o.k_obs > 0.1, "{o:?}");
        assert!(o.excluded_at_zero < 1e-15);
        // the excluded direction is invisible at every time: ℓ(0) = 0
        assert!(o.excluded_observation < 1e-12);
    }

    #[test]
    fn shrinking_window_lowers_k_obs() {
        let g = Grid::standard(8).with_time(1.0, 64);
        let mut last = f64::INFINITY;
        for b in [2.0 * std::f64::consts::PI, 3.0, 1.5707963267948966, 0.8] {
            let spec = if b > 6.0 { ControlSpec::full_torus() } else { ControlSpec::new(vec![(0.0, b)]).unwrap() };
            let k = obs(&g, &spec, None).k_obs;
            assert!(k > 0.0 && k <= last * (1.0 + 1e-12), "ω = (0, {b}): {k} > {last}");
            last = k;
        }
    }

    #[test]
    fn flat_k_obs_is_time_translation_invariant() {
        let g = Grid::standard(8).with_time(1.0, 64);
        let spec = ControlSpec::new(vec![(0.0, 2.0)]).unwrap();
        let shift = (g.multiplier_matrix(MultiplierKind::L) * C64::new(0.0, -0.37)).exp();
        let (a, b) = (obs(&g, &spec, None), obs(&g, &spec, Some(&shift)));
        assert!((a.k_obs - b.k_obs).abs() < 1e-10 * a.lambda_max);
    }

    #[test]
    fn mean_defect_constant_is_lattice_stable() {
        let delta = 1e-2;
        let c = |n: usize| {
            let g = Grid::standard(n);
            let f = g.from_fn(|x| 0.5 + x.cos() + 0.3 * (2.0 * x).sin() + (x.sin()).exp() - 1.0);
            let a = CMat::identity(g.dim(), g.dim()) + g.mul_matrix(&f) * C64::new(delta, 0.0);
            mean_defect_constant(&a, &g, delta)
        };
        let (a, b) = (c(16), c(32));
        assert!(a > 0.0 && (a - b).abs() < 1e-8 * a, "{a} {b}");
    }
}
