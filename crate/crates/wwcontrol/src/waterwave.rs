//! Dirichlet–Neumann operator, good unknown, symmetrizer symbols and the map
//! between the surface variables `(η, ψ)` and the complex unknown `u = T_p ω - i T_q η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, CMat, C64, ZERO};
use crate::paradiff::{paraop_matrix, paraproduct, paraproduct_in_symbol, CutoffParams, Symbol};
use crate::spectral::{Field, Grid, MultiplierKind};

/// Smallness thresholds standing in for the abstract constants of the theory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smallness {
    /// Index `σ₀`: the bound applies to `‖η‖_{H^{σ₀+1/2}}` and `‖u‖_{H^{σ₀}}`.
    pub sigma0: f64,
    pub eta_bound: f64,
    pub u_bound: f64,
    /// Refinement tolerance for the τ-integration of `G(η)`.
    pub tau_tol: f64,
    /// Largest number of RK4 steps in τ before refusing.
    pub tau_max_steps: usize,
}

impl Default for Smallness {
    fn default() -> Self {
        Self { sigma0: 1.0, eta_bound: 0.05, u_bound: 0.05, tau_tol: 1e-10, tau_max_steps: 256 }
    }
}

/// Surface elevation and trace of the velocity potential.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub eta: Field,
    pub psi: Field,
}

impl WaveState {
    pub fn zeros(n: usize) -> Self {
        Self { eta: Field::zeros(n), psi: Field::zeros(n) }
    }

    /// `‖η‖_{H^{σ+1/2}} + ‖ψ‖_{H^σ}`.
    pub fn norm(&self, sigma: f64) -> f64 {
        self.eta.sobolev_norm(sigma + 0.5) + self.psi.sobolev_norm(sigma)
    }

    pub fn sub(&self, o: &WaveState) -> WaveState {
        WaveState { eta: &self.eta - &o.eta, psi: &self.psi - &o.psi }
    }

    pub fn axpy(&self, a: f64, o: &WaveState) -> WaveState {
        WaveState { eta: &self.eta + &o.eta.scale(a), psi: &self.psi + &o.psi.scale(a) }
    }
}

/// Dense Dirichlet–Neumann matrix together with its τ-refinement record.
#[derive(Clone, Debug)]
pub struct DnOperator {
    pub mat: CMat,
    pub tau_steps: usize,
    /// Max-entry change between the accepted step count and half of it.
    pub refinement_change: f64,
}

/// `B`, `V` and the good unknown `ω = ψ - T_B η`.
#[derive(Clone, Debug)]
pub struct Bvw {
    pub b: Field,
    pub v: Field,
    pub omega: Field,
}

/// Symmetrizer symbols attached to a surface `η`.
#[derive(Clone, Debug)]
pub struct Symbols {
    /// `c = (1+η_x²)^{-3/4}`.
    pub c: Field,
    pub c_samples: Vec<f64>,
    pub p: Symbol,
    pub q: Symbol,
    /// `Q` with `T_q = ∂_x T_Q`.
    pub qq: Symbol,
}

/// Water-wave model on a fixed lattice.
#[derive(Clone, Debug)]
pub struct Model {
    pub grid: Grid,
    pub cut: CutoffParams,
    pub small: Smallness,
}

/// Output of [`Model::paralin_defect`].
#[derive(Clone, Debug)]
pub struct ParalinDefect {
    pub f: Field,
    /// `‖F(η)ψ‖_{H^{σ₀+1/2}}`.
    pub norm_smooth: f64,
    /// `‖F(η)ψ‖_{H^{σ₀-2}}`.
    pub norm_weak: f64,
}

impl Model {
    pub fn new(grid: Grid) -> Self {
        Self { grid, cut: CutoffParams::default(), small: Smallness::default() }
    }

    fn real_samples(&self, f: &Field) -> Vec<f64> {
        self.grid.to_physical_real(f)
    }

    fn check_eta(&self, eta: &Field) -> Result<()> {
        self.grid.check(eta)?;
        if !eta.is_real(1e-12 * (1.0 + eta.l2_norm())) {
            return Err(Error::Domain("η must be real".into()));
        }
        if !eta.is_zero_mean(1e-12) {
            return Err(Error::Domain("η must have zero mean".into()));
        }
        let s = eta.sobolev_norm(self.small.sigma0 + 0.5);
        if s > self.small.eta_bound {
            return Err(Error::Smallness { what: "‖η‖_{H^{σ₀+1/2}}", value: s, bound: self.small.eta_bound });
        }
        Ok(())
    }

    /// `G(η)` by RK4 integration of the shape-derivative equation in τ ∈ [0,1].
    ///
    /// The step count is doubled from 1 until two successive results agree to
    /// `tau_tol` in the max entry norm; the finer one is returned, symmetrized.
    pub fn dn_operator(&self, eta: &Field) -> Result<DnOperator> {
        self.check_eta(eta)?;
        let g = &self.grid;
        let g0 = g.multiplier_matrix(MultiplierKind::G0);
        if eta.l2_norm() == 0.0 {
            return Ok(DnOperator { mat: g0, tau_steps: 0, refinement_change: 0.0 });
        }
        let ctx = DnContext::new(g, eta);
        let mut steps = 1;
        let mut prev = ctx.integrate(&g0, steps);
        loop {
            steps *= 2;
            let next = ctx.integrate(&g0, steps);
            let change = (&next - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let scale = next.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if change <= self.small.tau_tol * scale {
                let mat = (&next + next.adjoint()) * C64::new(0.5, 0.0);
                return Ok(DnOperator { mat, tau_steps: steps, refinement_change: change });
            }
            if steps >= self.small.tau_max_steps {
                return Err(Error::NoConvergence { what: "DN τ-integration", iterations: steps, last: change });
            }
            prev = next;
        }
    }

    /// Matrix of `ψ ↦ B(η)ψ = (G(η)ψ + η_x ψ_x)/(1+η_x²)`.
    fn b_matrix(&self, eta: &Field, gmat: &CMat) -> CMat {
        let g = &self.grid;
        let ex = self.real_samples(&g.dx(eta));
        let w: Vec<f64> = ex.iter().map(|v| 1.0 / (1.0 + v * v)).collect();
        let mw = g.mul_matrix_real(&w);
        let mex = g.mul_matrix_real(&ex);
        let d = g.multiplier_diag(MultiplierKind::Dx);
        let mexd = CMat::from_fn(g.dim(), g.dim(), |i, j| mex[(i, j)] * d[j]);
        mw * (gmat + mexd)
    }

    /// `B`, `V`, `ω` given a precomputed `G(η)`.
    pub fn bvw_with(&self, eta: &Field, psi: &Field, gmat: &CMat) -> Bvw {
        let g = &self.grid;
        let b = &self.b_matrix(eta, gmat) * psi;
        let ex = g.dx(eta);
        let v = &g.dx(psi) - &g.product(&b, &ex);
        let omega = psi - &paraproduct(g, &b, eta, &self.cut);
        Bvw { b, v, omega }
    }

    pub fn bvw(&self, eta: &Field, psi: &Field) -> Result<Bvw> {
        self.grid.check(psi)?;
        let dn = self.dn_operator(eta)?;
        Ok(self.bvw_with(eta, psi, &dn.mat))
    }

    /// Solves `ψ = ω + T_{B(η)ψ} η` by fixed-point iteration.
    pub fn psi_from_omega(&self, eta: &Field, omega: &Field) -> Result<Field> {
        let dn = self.dn_operator(eta)?;
        self.psi_from_omega_with(eta, omega, &dn.mat)
    }

    pub fn psi_from_omega_with(&self, eta: &Field, omega: &Field, gmat: &CMat) -> Result<Field> {
        let g = &self.grid;
        g.check(omega)?;
        let j = paraproduct_in_symbol(g, eta, &self.cut) * self.b_matrix(eta, gmat);
        let factor = op_norm(&j);
        if factor >= 0.5 {
            return Err(Error::Contraction { what: "ψ = ω + T_{Bψ}η", factor });
        }
        let scale = omega.l2_norm().max(f64::MIN_POSITIVE);
        let mut psi = omega.clone();
        for _ in 0..200 {
            let next = omega + &(&j * &psi);
            let change = (&next - &psi).l2_norm();
            psi = next;
            if change <= 1e-14 * scale {
                return Ok(psi);
            }
        }
        Err(Error::NoConvergence { what: "ψ from ω", iterations: 200, last: factor })
    }

    /// Symbols `c`, `p`, `q`, `Q` of the symmetrizer for the surface `η`.
    pub fn symbols_pq(&self, eta: &Field) -> Symbols {
        let g = &self.grid;
        let ex = self.real_samples(&g.dx(eta));
        let c_samples: Vec<f64> = ex.iter().map(|v| (1.0 + v * v).powf(-0.75)).collect();
        let c = g.to_spectral_real(&c_samples).expect("grid-sized samples");
        let cx = real_dx(&c_samples);
        let c23: Vec<f64> = c_samples.iter().map(|v| v.powf(2.0 / 3.0)).collect();
        let c23x = real_dx(&c23);
        let chi = |n: i64| if n == 0 { 0.0 } else { 1.0 };
        let p = Symbol::from_fn(g, 0.0, |j, n| {
            let base = C64::new(c_samples[j].powf(-1.0 / 3.0), 0.0);
            if n == 0 {
                return base;
            }
            let nf = n as f64;
            let sub = chi(n) * g.dell(nf) / g.ell(nf) * c_samples[j].powf(-4.0 / 3.0) * cx[j];
            base + C64::new(0.0, -5.0 / 18.0 * sub)
        })
        .tagged("p");
        let q = Symbol::from_fn(g, 0.5, |j, n| {
            if n == 0 {
                return ZERO;
            }
            let nf = n as f64;
            let r = g.ell(nf) / g.lambda(nf);
            C64::new(c23[j] * r, 0.0) + C64::new(0.0, -c23x[j] * r / nf)
        })
        .tagged("q");
        let qq = Symbol::from_fn(g, -0.5, |j, n| {
            if n == 0 {
                return ZERO;
            }
            let nf = n as f64;
            C64::new(0.0, -c23[j] * g.ell(nf) / (g.lambda(nf) * nf))
        })
        .tagged("Q");
        Symbols { c, c_samples, p, q, qq }
    }

    /// `Q̃(n) = χ(n) ℓ(n)/λ(n)`.
    fn qtilde(&self, n: i64) -> f64 {
        if n == 0 {
            0.0
        } else {
            let nf = n as f64;
            self.grid.ell(nf) / self.grid.lambda(nf)
        }
    }

    /// `u = T_p ω - i T_q η`.
    pub fn to_u(&self, state: &WaveState) -> Result<Field> {
        let dn = self.dn_operator(&state.eta)?;
        Ok(self.to_u_with(state, &dn.mat))
    }

    pub fn to_u_with(&self, state: &WaveState, gmat: &CMat) -> Field {
        let g = &self.grid;
        let bvw = self.bvw_with(&state.eta, &state.psi, gmat);
        let sy = self.symbols_pq(&state.eta);
        let tp = paraop_matrix(g, &sy.p, &self.cut);
        let tq = paraop_matrix(g, &sy.q, &self.cut);
        let a = &tp * &bvw.omega;
        let b = &tq * &state.eta;
        &a - &b.scale_c(C64::new(0.0, 1.0))
    }

    /// Inverse of [`Model::to_u`].
    pub fn from_u(&self, u: &Field) -> Result<WaveState> {
        let g = &self.grid;
        g.check(u)?;
        let un = u.sobolev_norm(self.small.sigma0);
        if un > self.small.u_bound {
            return Err(Error::Smallness { what: "‖u‖_{H^{σ₀}}", value: un, bound: self.small.u_bound });
        }
        if u.mean().im.abs() > 1e-12 * (1.0 + u.l2_norm()) {
            return Err(Error::Domain(format!("Im û(0) = {:.3e} must vanish", u.mean().im)));
        }
        let im_u = u.im_part();
        let re_u = u.re_part();
        let scale = u.l2_norm();
        if scale == 0.0 {
            return Ok(WaveState::zeros(g.n));
        }
        let qt: Vec<f64> = g.modes().map(|n| self.qtilde(n)).collect();
        let apply_qinv = |f: &Field| {
            let mut out = Field::zeros(g.n);
            for (j, n) in g.modes().enumerate() {
                if n != 0 {
                    out.coeffs[j] = f.coeffs[j] / qt[j];
                }
            }
            out
        };
        // Fixed point η = -Q̃^{-1}((T_{q(η)} - Q̃)η + Im u).
        let mut eta = apply_qinv(&im_u).scale(-1.0);
        eta.set(0, ZERO);
        let mut last_change = f64::INFINITY;
        let mut converged = false;
        for it in 0..200 {
            let sy = self.symbols_pq(&eta);
            let tq = paraop_matrix(g, &sy.q, &self.cut);
            let mut r = &tq * &eta;
            for (j, _) in g.modes().enumerate() {
                r.coeffs[j] -= eta.coeffs[j] * qt[j];
            }
            let mut next = apply_qinv(&(&r + &im_u)).scale(-1.0);
            next = next.re_part();
            let change = (&next - &eta).l2_norm();
            eta = next;
            if it > 1 && last_change > 0.0 && change / last_change >= 0.5 && change > 1e-13 * scale {
                return Err(Error::Contraction { what: "η fixed point", factor: change / last_change });
            }
            last_change = change;
            if change <= 1e-14 * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { what: "η fixed point", iterations: 200, last: last_change });
        }
        // ω = T_p^{-1} Re u by a Neumann series.
        let sy = self.symbols_pq(&eta);
        let tp = paraop_matrix(g, &sy.p, &self.cut);
        let e = CMat::identity(g.dim(), g.dim()) - &tp;
        let en = op_norm(&e);
        if en >= 0.5 {
            return Err(Error::Contraction { what: "Neumann series for T_p", factor: en });
        }
        let mut omega = re_u.clone();
        for _ in 0..200 {
            let next = &re_u + &(&e * &omega);
            let change = (&next - &omega).l2_norm();
            omega = next;
            if change <= 1e-15 * scale {
                break;
            }
        }
        let dn = self.dn_operator(&eta)?;
        let psi = self.psi_from_omega_with(&eta, &omega, &dn.mat)?.re_part();
        Ok(WaveState { eta, psi })
    }

    /// Right-hand side of the water-wave system with surface tension 1.
    pub fn rhs_full(&self, state: &WaveState, p_ext: &Field) -> Result<WaveState> {
        let dn = self.dn_operator(&state.eta)?;
        Ok(self.rhs_with(state, p_ext, &dn.mat))
    }

    pub fn rhs_with(&self, state: &WaveState, p_ext: &Field, gmat: &CMat) -> WaveState {
        let g = &self.grid;
        let gpsi = gmat * &state.psi;
        let ex = self.real_samples(&g.dx(&state.eta));
        let px = self.real_samples(&g.dx(&state.psi));
        let gp = self.real_samples(&gpsi);
        let quad: Vec<f64> = (0..g.mx)
            .map(|j| {
                let s = gp[j] + ex[j] * px[j];
                -0.5 * px[j] * px[j] + 0.5 * s * s / (1.0 + ex[j] * ex[j])
            })
            .collect();
        let curv: Vec<f64> = ex.iter().map(|v| v / (1.0 + v * v).sqrt()).collect();
        let h = g.dx(&g.to_spectral_real(&curv).expect("grid-sized samples"));
        let quad = g.to_spectral_real(&quad).expect("grid-sized samples");
        let mut dpsi = &(&quad + &h) - &state.eta.scale(g.g);
        dpsi += p_ext;
        WaveState { eta: gpsi.re_part(), psi: dpsi.re_part() }
    }

    /// `F(η)ψ = G(η)ψ - G(0)ω + ∂_x(T_V η)`.
    pub fn paralin_defect(&self, eta: &Field, psi: &Field) -> Result<ParalinDefect> {
        let g = &self.grid;
        let dn = self.dn_operator(eta)?;
        let bvw = self.bvw_with(eta, psi, &dn.mat);
        let gpsi = &dn.mat * psi;
        let g0w = g.apply_multiplier(MultiplierKind::G0, &bvw.omega)?;
        let tv = paraproduct(g, &bvw.v, eta, &self.cut);
        let f = &(&gpsi - &g0w) + &g.dx(&tv);
        Ok(ParalinDefect {
            norm_smooth: f.sobolev_norm(self.small.sigma0 + 0.5),
            norm_weak: f.sobolev_norm(self.small.sigma0 - 2.0),
            f,
        })
    }

    /// Frozen coefficients `(V, c, p)` of the paradifferential operator at a state.
    pub fn frozen_coefficients(&self, state: &WaveState) -> Result<(Field, Field, Symbol)> {
        let dn = self.dn_operator(&state.eta)?;
        Ok(self.frozen_coefficients_with(state, &dn.mat))
    }

    pub fn frozen_coefficients_with(&self, state: &WaveState, gmat: &CMat) -> (Field, Field, Symbol) {
        let bvw = self.bvw_with(&state.eta, &state.psi, gmat);
        let sy = self.symbols_pq(&state.eta);
        (bvw.v.re_part(), sy.c, sy.p)
    }

    /// `½⟨ψ, G(η)ψ⟩ + (g/2)‖η‖² + ⟨√(1+η_x²) − 1⟩`, spatial averages over the torus.
    pub fn energy(&self, state: &WaveState) -> Result<f64> {
        let gmat = self.dn_operator(&state.eta)?.mat;
        Ok(self.energy_with(state, &gmat))
    }

    pub fn energy_with(&self, state: &WaveState, gmat: &CMat) -> f64 {
        let g = &self.grid;
        let kinetic = 0.5 * state.psi.dot_re(&Field::from_vec(gmat * &state.psi.coeffs));
        let ex = self.real_samples(&g.dx(&state.eta));
        let surface = ex.iter().map(|v| (0.5 * (v * v).ln_1p()).exp_m1()).sum::<f64>() / g.mx as f64;
        kinetic + 0.5 * g.g * state.eta.dot_re(&state.eta) + surface
    }
}

/// Spectral derivative of real periodic samples.
pub fn real_dx(samples: &[f64]) -> Vec<f64> {
    let c: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    crate::paradiff::spectral_dx(&c).into_iter().map(|z| z.re).collect()
}

struct DnContext {
    grid: Grid,
    dxd: CMat,
    m_eta: CMat,
    m_ex: CMat,
    m_ex_dx: CMat,
    ex2: Vec<f64>,
}

impl DnContext {
    fn new(g: &Grid, eta: &Field) -> Self {
        let ex = g.to_physical_real(&g.dx(eta));
        let m_eta = g.mul_matrix_re(eta);
        let m_ex = g.mul_matrix_real(&ex);
        let dxd = g.multiplier_matrix(MultiplierKind::Dx);
        let m_ex_dx = &m_ex * &dxd;
        Self { grid: g.clone(), dxd, m_eta, m_ex, m_ex_dx, ex2: ex.iter().map(|v| v * v).collect() }
    }

    /// `dM/dτ = -M Mul(η) B_τ - Dx Mul(η) V_τ` with
    /// `B_τ = Mul(1/(1+τ²η_x²))(M + τ Mul(η_x) Dx)` and `V_τ = Dx - τ Mul(η_x) B_τ`.
    fn rhs(&self, tau: f64, m: &CMat) -> CMat {
        let t = C64::new(tau, 0.0);
        let w: Vec<f64> = self.ex2.iter().map(|v| 1.0 / (1.0 + tau * tau * v)).collect();
        let bt = self.grid.mul_matrix_real(&w) * (m + &self.m_ex_dx * t);
        let vt = &self.dxd - (&self.m_ex * &bt) * t;
        -(m * (&self.m_eta * &bt)) - &self.dxd * (&self.m_eta * vt)
    }

    fn integrate(&self, g0: &CMat, steps: usize) -> CMat {
        let h = 1.0 / steps as f64;
        let mut m = g0.clone();
        let hc = |x: f64| C64::new(x, 0.0);
        for s in 0..steps {
            let t = s as f64 * h;
            let k1 = self.rhs(t, &m);
            let k2 = self.rhs(t + 0.5 * h, &(&m + &k1 * hc(0.5 * h)));
            let k3 = self.rhs(t + 0.5 * h, &(&m + &k2 * hc(0.5 * h)));
            let k4 = self.rhs(t + h, &(&m + &k3 * hc(h)));
            m += (k1 + k2 * hc(2.0) + k3 * hc(2.0) + k4) * hc(h / 6.0);
        }
        m
    }
}
