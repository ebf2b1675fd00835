//! HUM controls for transport-form equations, the lifted control for the
//! paradifferential problem, the quasi-linear scheme and the full pipeline.
//!
//! All controls are constant on the time intervals of the grid and enter the
//! equations as `C Re f`, with `C` the multiplication by the cutoff `χ_ω`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{mean_invariant_drift, nonlinear_step, cfl_substeps, solve_nonlinear, Coefficients, Mode, Propagator, Trajectory};
use crate::linalg::{inverse, op_norm_real, orth_complement, realify, to_complex, to_real, CMat, RMat, C64, I, ONE};
use crate::paradiff::paraop_matrix;
use crate::reduction::{lambda_at, lambda_nodes, KOperator, Lambda, LambdaParams};
use crate::spectral::{smooth_bump, Field, Grid};
use crate::transform::{build_phi, nodes};
use crate::waterwave::{Model, WaveState};

/// Control region and target weight.
#[derive(Clone, Debug)]
pub struct ControlSpec {
    /// Disjoint intervals `(a, b)` of the torus making up `ω`.
    pub omega: Vec<(f64, f64)>,
    /// Transition width of `χ_ω`; `χ_ω ≡ 1` on `ω₁ = [a+r, b-r]`.
    pub ramp: f64,
    /// Weight `M` of the terminal condition `w(T) = ibM`; `None` means `M ≡ 1`.
    pub m: Option<Field>,
    /// Largest admissible `‖M-1‖_∞`.
    pub m_threshold: f64,
    /// Gramian eigenvalues at or below this abort as non-observable.
    pub obs_floor: f64,
}

fn is_full(a: f64, b: f64) -> bool {
    b - a >= 2.0 * PI - 1e-12
}

impl ControlSpec {
    /// `χ_ω` with transitions of width `len/5` on each interval.
    pub fn new(omega: Vec<(f64, f64)>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Domain("ω needs at least one interval".into()));
        }
        let mut ramp = f64::INFINITY;
        for &(a, b) in &omega {
            if !(a.is_finite() && b.is_finite() && b > a) || b - a > 2.0 * PI + 1e-12 {
                return Err(Error::Domain(format!("invalid interval ({a}, {b})")));
            }
            if !is_full(a, b) {
                ramp = ramp.min((b - a) / 5.0);
            }
        }
        if omega.len() > 1 && omega.iter().any(|&(a, b)| is_full(a, b)) {
            return Err(Error::Domain("the full torus cannot be combined with other intervals".into()));
        }
        let ramp = if ramp.is_finite() { ramp } else { 0.0 };
        Ok(Self { omega, ramp, m: None, m_threshold: 0.25, obs_floor: 1e-12 })
    }

    pub fn full_torus() -> Self {
        Self { omega: vec![(0.0, 2.0 * PI)], ramp: 0.0, m: None, m_threshold: 0.25, obs_floor: 1e-12 }
    }

    pub fn with_ramp(mut self, r: f64) -> Result<Self> {
        for &(a, b) in &self.omega {
            if !is_full(a, b) && !(r > 0.0 && 2.0 * r < b - a) {
                return Err(Error::Domain(format!("ramp {r} does not fit in ({a}, {b})")));
            }
        }
        self.ramp = r;
        Ok(self)
    }

    pub fn with_weight(mut self, m: Field) -> Self {
        self.m = Some(m);
        self
    }

    /// Whether `x` (mod 2π) lies in `ω`.
    pub fn contains(&self, x: f64) -> bool {
        self.omega.iter().any(|&(a, b)| {
            let y = (x - a).rem_euclid(2.0 * PI);
            is_full(a, b) || (y > 0.0 && y < b - a)
        })
    }

    /// `ω₁ ⊂ ω`, where `χ_ω ≡ 1`.
    pub fn omega1(&self) -> Vec<(f64, f64)> {
        self.omega
            .iter()
            .map(|&(a, b)| if is_full(a, b) { (a, b) } else { (a + self.ramp, b - self.ramp) })
            .collect()
    }

    pub fn chi_at(&self, x: f64) -> f64 {
        let s: f64 = self
            .omega
            .iter()
            .map(|&(a, b)| if is_full(a, b) { 1.0 } else { smooth_bump(x, a, b, self.ramp) })
            .sum();
        s.min(1.0)
    }

    pub fn chi_samples(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.mx).map(|j| self.chi_at(grid.x(j))).collect()
    }

    pub fn chi(&self, grid: &Grid) -> Field {
        grid.to_spectral_real(&self.chi_samples(grid)).expect("grid-sized samples")
    }

    /// Matrix of `u ↦ χ_ω u`.
    pub fn chi_matrix(&self, grid: &Grid) -> CMat {
        grid.mul_matrix_real(&self.chi_samples(grid))
    }

    /// `M`, or the constant 1.
    pub fn weight(&self, grid: &Grid) -> Field {
        match &self.m {
            Some(m) => m.resize(grid.n),
            None => grid.constant(ONE),
        }
    }

    fn check_weight(&self, grid: &Grid) -> Result<Field> {
        let m = self.weight(grid);
        if !m.is_real(1e-12 * (1.0 + m.l2_norm())) {
            return Err(Error::Domain("M must be real".into()));
        }
        let dev = grid
            .to_physical_real(&m)
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        if dev > self.m_threshold {
            return Err(Error::Smallness { what: "‖M-1‖_∞", value: dev, bound: self.m_threshold });
        }
        Ok(m)
    }
}

/// Real matrix of `u ↦ Re u` on `[Re û; Im û]`.
pub fn re_projection(grid: &Grid) -> RMat {
    let d = grid.dim();
    let mut p = RMat::zeros(2 * d, 2 * d);
    for j in 0..d {
        let jm = grid.idx(-grid.mode(j));
        p[(j, j)] += 0.5;
        p[(j, jm)] += 0.5;
        p[(d + j, d + j)] += 0.5;
        p[(d + j, d + jm)] -= 0.5;
    }
    p
}

/// Discrete control system `x_{k+1} = U_k x_k + J_k C Re g_k` with terminal
/// target `x_K ∈ iℝM`.
#[derive(Clone, Debug)]
pub struct ControlSystem {
    pub steps: Vec<CMat>,
    pub inputs: Vec<CMat>,
    pub obs: CMat,
    pub m: Field,
    pub dt: f64,
}

/// HUM operator of a [`ControlSystem`]: Gramian on `L²_M`, assembled from
/// the discrete adjoint chain `φ_k = U_kᴴ φ_{k+1}` with controls
/// `g_k = J_kᴴ φ_{k+1} / Δt`.
#[derive(Clone, Debug)]
pub struct Hum {
    pub sys: ControlSystem,
    /// Orthonormal real basis of `L²_M = (iM)^⊥`.
    pub basis: RMat,
    /// `realify(J_kᴴ Φ(K,k+1)ᴴ) E`.
    adj: Vec<RMat>,
    pub gram: RMat,
    /// `S = G^{-1}(-Eᵀ realify(Φ(K,0)))`: initial datum to terminal adjoint coordinates.
    pub solve_map: RMat,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Always false: the SVD factorization needs no ridge.
    pub ridge: bool,
    /// `‖G - Gᵀ‖ / ‖G‖` before symmetrization.
    pub asymmetry: f64,
}

/// Output of [`Hum::solve`].
#[derive(Clone, Debug)]
pub struct HumSolution {
    /// Adjoint state at the nodes.
    pub adjoint: Vec<Field>,
    /// Interval controls `g_k`.
    pub controls: Vec<Field>,
    /// Interval sources `C Re g_k`.
    pub sources: Vec<Field>,
}

impl Hum {
    /// Assembles the Gramian and factors it through the SVD of its square root
    /// `F` (`G = FᵀF`), so solves lose `cond(G)^{1/2}` digits instead of `cond(G)`.
    ///
    /// Refuses when `λ_min(G) ≤ floor`.
    pub fn new(grid: &Grid, sys: ControlSystem, floor: f64) -> Result<Self> {
        let d = grid.dim();
        let kt = sys.steps.len();
        if sys.inputs.len() != kt {
            return Err(Error::Length { expected: kt, got: sys.inputs.len() });
        }
        let im = to_real(&sys.m.scale_c(I).coeffs);
        if im.norm() == 0.0 {
            return Err(Error::Domain("M must not vanish".into()));
        }
        let basis = orth_complement(&im);
        let obs_r = realify(&sys.obs) * re_projection(grid);
        let obs_r = (&obs_r + obs_r.transpose()) * 0.5;
        let eig = obs_r.clone().symmetric_eigen();
        let root = RMat::from_fn(2 * d, 2 * d, |i, j| eig.eigenvalues[i].max(0.0).sqrt() * eig.eigenvectors[(j, i)]);
        let mut adj = vec![RMat::zeros(0, 0); kt];
        let mut gram = RMat::zeros(2 * d - 1, 2 * d - 1);
        let mut stacked = RMat::zeros(kt * 2 * d, 2 * d - 1);
        let sdt = sys.dt.sqrt();
        let mut phi = CMat::identity(d, d);
        for k in (0..kt).rev() {
            let mk = (&phi * &sys.inputs[k]).adjoint();
            let a = realify(&mk) * &basis;
            gram += a.transpose() * &obs_r * &a / sys.dt;
            stacked.rows_mut(k * 2 * d, 2 * d).copy_from(&(&root * &a / sdt));
            adj[k] = a;
            phi = &phi * &sys.steps[k];
        }
        let gn = gram.norm();
        let asymmetry = if gn > 0.0 { (&gram - gram.transpose()).norm() / gn } else { 0.0 };
        let gram = (&gram + gram.transpose()) * 0.5;
        let svd = stacked.svd(false, true);
        let sig = svd.singular_values;
        let vt = svd.v_t.expect("requested V");
        let smin = sig.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = sig.iter().cloned().fold(0.0, f64::max);
        let lambda_min = smin * smin;
        let lambda_max = smax * smax;
        if !(lambda_min > floor) {
            return Err(Error::NonObservable { lambda_min });
        }
        let rhs = -(basis.transpose() * realify(&phi));
        let mut w = &vt * rhs;
        for (i, mut row) in w.row_iter_mut().enumerate() {
            row /= sig[i] * sig[i];
        }
        let solve_map = vt.transpose() * w;
        Ok(Self { sys, basis, adj, gram, solve_map, lambda_min, lambda_max, ridge: false, asymmetry })
    }

    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Real matrix of `x₀ ↦ g_k`.
    pub fn control_map(&self, k: usize) -> RMat {
        &self.adj[k] * &self.solve_map / self.sys.dt
    }

    /// `sup_k ‖x₀ ↦ g_k‖`.
    pub fn operator_norm(&self) -> f64 {
        (0..self.len()).map(|k| op_norm_real(&self.control_map(k))).fold(0.0, f64::max)
    }

    pub fn solve(&self, x0: &Field) -> HumSolution {
        let y = &self.solve_map * to_real(&x0.coeffs);
        let kt = self.len();
        let phi_t = Field::from_vec(to_complex(&(&self.basis * &y)));
        let mut adjoint = vec![Field::zeros(x0.nmax()); kt + 1];
        adjoint[kt] = phi_t;
        for k in (0..kt).rev() {
            adjoint[k] = Field::from_vec(self.sys.steps[k].adjoint() * &adjoint[k + 1].coeffs);
        }
        let controls: Vec<Field> = (0..kt)
            .map(|k| Field::from_vec(to_complex(&(&self.adj[k] * &y / self.sys.dt))))
            .collect();
        let sources = controls.iter().map(|g| &self.sys.obs * &g.re_part()).collect();
        HumSolution { adjoint, controls, sources }
    }

    /// `x_{k+1} = U_k x_k + J_k s_k`.
    pub fn forward(&self, x0: &Field, sources: &[Field]) -> Vec<Field> {
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(x0.clone());
        for k in 0..self.len() {
            let next = &(&self.sys.steps[k] * &out[k]) + &(&self.sys.inputs[k] * &sources[k]);
            out.push(next);
        }
        out
    }
}

/// Measured quantities attached to a control.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    pub ridge: bool,
    pub gram_asymmetry: f64,
    /// `‖w(T) - ibM‖_{L²}`.
    pub terminal_residual: f64,
    /// `sup_k ‖χ_ω Re f_k‖_{L²}`, the applied source.
    pub cost: f64,
    /// Measured `𝓕₂(T) = 1/sup_k ‖w_in ↦ f_k‖`; zero when not computed.
    pub f2: f64,
}

/// A control, the controlled trajectory and the terminal constant `b`.
#[derive(Clone, Debug)]
pub struct ControlResult {
    /// Interval controls, stamped at the interval midpoints.
    pub f: Trajectory,
    /// Interval sources fed to the linear solve.
    pub source: Vec<Field>,
    /// Adjoint state at the nodes (of the lifted problem for [`theta_full`]).
    pub adjoint: Trajectory,
    pub traj: Trajectory,
    pub b: f64,
    pub diag: Diagnostics,
}

fn midpoints(grid: &Grid, values: Vec<Field>) -> Trajectory {
    let t = (0..values.len()).map(|k| (k as f64 + 0.5) * grid.dt()).collect();
    Trajectory { t, values }
}

fn terminal_constant(x: &Field, m: &Field) -> (f64, f64) {
    let im = m.scale_c(I);
    let b = x.dot_re(&im) / m.dot_re(m);
    (b, (x - &im.scale(b)).l2_norm())
}

/// `Θ_{M,T}`: HUM control of `∂_t w + W∂_x w + iLw + R₃w = χ_ω Re f` from
/// `w_in` to `ibM`.
pub fn hum_control(grid: &Grid, coeffs: &Coefficients, spec: &ControlSpec, w_in: &Field) -> Result<ControlResult> {
    if !matches!(coeffs.mode, Mode::Transport | Mode::Flat) {
        return Err(Error::Domain("hum_control needs transport coefficients".into()));
    }
    grid.check(w_in)?;
    let m = spec.check_weight(grid)?;
    let prop = Propagator::build(grid, coeffs)?;
    let sys = ControlSystem {
        steps: prop.steps.clone(),
        inputs: prop.inputs.clone(),
        obs: spec.chi_matrix(grid),
        m: m.clone(),
        dt: grid.dt(),
    };
    let hum = Hum::new(grid, sys, spec.obs_floor)?;
    let sol = hum.solve(w_in);
    let traj = Trajectory::new(grid, hum.forward(w_in, &sol.sources));
    let (b, residual) = terminal_constant(traj.last(), &m);
    let cost = sol.sources.iter().map(|f| f.l2_norm()).fold(0.0, f64::max);
    let norm = hum.operator_norm();
    let diag = Diagnostics {
        lambda_min: hum.lambda_min,
        lambda_max: hum.lambda_max,
        condition: hum.condition(),
        ridge: hum.ridge,
        gram_asymmetry: hum.asymmetry,
        terminal_residual: residual,
        cost,
        f2: if norm > 0.0 { 1.0 / norm } else { f64::INFINITY },
    };
    Ok(ControlResult {
        f: midpoints(grid, sol.controls),
        source: sol.sources,
        adjoint: Trajectory::new(grid, sol.adjoint),
        traj,
        b,
        diag,
    })
}

/// Residuals of the characterization of `Θ_{M,T}(w_in)`.
#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    /// `max_k ‖φ_k - U_kᴴ φ_{k+1}‖`, relative to `sup_k ‖φ_k‖`.
    pub adjoint_residual: f64,
    /// `max_k ‖f_k - J_kᴴ φ_{k+1}/Δt‖`, relative to `sup_k ‖φ_k‖`.
    pub control_residual: f64,
    /// `|Im ∫ M φ(T)|`, relative to `‖φ(T)‖ ‖M‖`.
    pub terminal_constraint: f64,
    pub pass: bool,
}

/// Checks that the control solves the adjoint equation and lies in `L²_M` at `T`.
pub fn verify_uniqueness(grid: &Grid, coeffs: &Coefficients, spec: &ControlSpec, result: &ControlResult) -> Result<UniquenessReport> {
    let prop = Propagator::build(grid, coeffs)?;
    let m = spec.weight(grid);
    let phi = &result.adjoint.values;
    let f = &result.f.values;
    if phi.len() != prop.len() + 1 || f.len() != prop.len() {
        return Err(Error::Length { expected: prop.len() + 1, got: phi.len() });
    }
    let scale = phi.iter().map(|p| p.l2_norm()).fold(0.0, f64::max);
    let rel = |v: f64| if scale > 0.0 { v / scale } else { v };
    let mut adjoint_residual: f64 = 0.0;
    let mut control_residual: f64 = 0.0;
    for k in 0..prop.len() {
        let back = Field::from_vec(prop.steps[k].adjoint() * &phi[k + 1].coeffs);
        adjoint_residual = adjoint_residual.max((&phi[k] - &back).l2_norm());
        let g = Field::from_vec(prop.inputs[k].adjoint() * &phi[k + 1].coeffs).scale(1.0 / grid.dt());
        control_residual = control_residual.max((&f[k] - &g).l2_norm());
    }
    let pt = &phi[prop.len()];
    let den = pt.l2_norm() * m.l2_norm();
    let tc = pt.dot_re(&m.scale_c(I)).abs();
    let terminal_constraint = if den > 0.0 { tc / den } else { tc };
    let adjoint_residual = rel(adjoint_residual);
    let control_residual = rel(control_residual);
    let pass = adjoint_residual <= 1e-8 && control_residual <= 1e-8 && terminal_constraint <= 1e-10;
    Ok(UniquenessReport { adjoint_residual, control_residual, terminal_constraint, pass })
}

/// `‖f‖_{C⁰H^μ} / ‖w_in‖_{H^μ}` (zero for `w_in = 0`).
pub fn control_regularity(result: &ControlResult, mu: f64) -> f64 {
    let w = result.traj.values[0].sobolev_norm(mu);
    if w == 0.0 {
        return 0.0;
    }
    result.f.sup_norm(mu) / w
}

/// One admissible problem for [`control_stability`].
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub grid: &'a Grid,
    pub coeffs: &'a Coefficients,
    pub spec: &'a ControlSpec,
}

/// Comparison of `Θ'(w_in)` with the time-rescaled `𝒯Θ(w_in)`.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub lambda: f64,
    /// `sup_k ‖f'_k - f_k‖_{L²}` on node-aligned lattices.
    pub difference: f64,
    /// `(|1-λ| + ‖W'-W̃‖_{C⁰H²} + ‖R'-R̃‖ + ‖M-M'‖_∞) ‖w_in‖_{H¹}`.
    pub rhs: f64,
    pub constant: f64,
}

pub fn control_stability(p: Problem, q: Problem, w_in: &Field) -> Result<StabilityReport> {
    if p.grid.kt != q.grid.kt {
        return Err(Error::Domain("both problems need the same number of time steps".into()));
    }
    let a = hum_control(p.grid, p.coeffs, p.spec, w_in)?;
    let b = hum_control(q.grid, q.coeffs, q.spec, w_in)?;
    let lambda = p.grid.t_end / q.grid.t_end;
    let difference = a.f.diff_sup(&b.f, 0.0);
    let mut dw: f64 = 0.0;
    let mut dr: f64 = 0.0;
    for k in 0..=p.grid.kt {
        let (tp, tq) = (p.grid.time(k), q.grid.time(k));
        let zero = Field::zeros(p.grid.n);
        let wp = p.coeffs.w_at(p.grid, tp).unwrap_or_else(|| zero.clone());
        let wq = q.coeffs.w_at(q.grid, tq).unwrap_or(zero);
        dw = dw.max((&wq - &wp).sobolev_norm(2.0));
        let d = p.grid.dim();
        let rp = p.coeffs.r_at(p.grid, tp).unwrap_or_else(|| CMat::zeros(d, d));
        let rq = q.coeffs.r_at(q.grid, tq).unwrap_or_else(|| CMat::zeros(d, d));
        dr = dr.max(crate::linalg::op_norm(&(rq - rp)));
    }
    let mp = p.grid.to_physical_real(&p.spec.weight(p.grid));
    let mq = q.grid.to_physical_real(&q.spec.weight(q.grid));
    let dm = mp.iter().zip(&mq).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let rhs = ((1.0 - lambda).abs() + dw + dr + dm) * w_in.sobolev_norm(1.0);
    let constant = if rhs > 0.0 { difference / rhs } else { 0.0 };
    Ok(StabilityReport { lambda, difference, rhs, constant })
}

/// Measurements of one [`theta_tilde`] call.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TildeReport {
    pub t1: f64,
    /// Support of `χ₂` (ω₁ shrunk by the worst warp).
    pub omega2: Vec<(f64, f64)>,
    pub warp: f64,
    /// `max |f(t,x)|` over fine-grid points outside `ω₁`, and outside `ω`.
    pub leak_omega1: f64,
    pub leak_omega: f64,
    /// `‖Φ(T)·1 − M‖_{L²}` between the lattice map and the closed form of `M`.
    pub weight_mismatch: f64,
    /// `‖u(T) − ib‖ / ‖u_in‖`.
    pub relative_residual: f64,
    /// `sup ‖W‖_{L∞}` and `‖M−1‖_∞` of the bundle.
    pub w_sup: f64,
    pub m_dev: f64,
}

/// `Θ̃_T u_in = m Φ⁻¹(χ₂ Θ_{M,T₁}(Φ u_in))`: control of
/// `∂_t u + T_V∂_x u + iL^{1/2}T_cL^{1/2}u + Ru = χ_ω Re f` from `u_in` to `ib`.
///
/// The HUM step runs on the conjugate `Φ_{k+1}U_kΦ_k⁻¹` of the one-step maps of
/// the original equation with terminal weight `Φ(T)·1`, so mapping back is exact
/// on the lattice. Controls are evaluated pointwise through the warp; `f`
/// vanishes identically outside `ω₁`, where `χ_ω ≡ 1`, so the source is `f`.
pub fn theta_tilde(grid: &Grid, coeffs: &Coefficients, spec: &ControlSpec, u_in: &Field) -> Result<(ControlResult, TildeReport)> {
    if !matches!(coeffs.mode, Mode::Paradifferential | Mode::Classical | Mode::Flat) {
        return Err(Error::Domain("theta_tilde needs (V, c, R) coefficients".into()));
    }
    grid.check(u_in)?;
    let n = grid.n;
    let d = grid.dim();
    let kt = grid.kt;
    let bundle = build_phi(grid, &coeffs.c, &coeffs.v, &[], n)?;
    let omega1 = spec.omega1();
    let omega2 = bundle.margins(&omega1)?;
    let chi2 = ControlSpec::new(omega2.clone())?;
    let prop = Propagator::build(grid, coeffs)?;
    let phis: Vec<CMat> = (0..=kt).map(|k| bundle.phi_matrix(grid.time(k), n)).collect::<Result<_>>()?;
    let phi_inv: Vec<CMat> = phis.iter().map(|m| inverse(m, "Φ")).collect::<Result<_>>()?;
    let xs = nodes(4 * grid.mx);
    let mut xis = Vec::with_capacity(kt);
    let mut pts_all = Vec::with_capacity(kt);
    for k in 0..kt {
        let t = (k as f64 + 0.5) * grid.dt();
        let (jac, pts) = bundle.inverse_points(t, &xs)?;
        let m = bundle.diffeo.m_at(t);
        let amp: Vec<f64> = jac.iter().zip(&pts).map(|(j, y)| m * j * chi2.chi_at(*y)).collect();
        let mut xi = CMat::zeros(d, d);
        for j in 0..d {
            let kk = grid.mode(j) as f64;
            let smp: Vec<C64> = pts.iter().zip(&amp).map(|(y, a)| C64::from_polar(*a, kk * y)).collect();
            xi.set_column(j, &grid.coefficients(&smp, n).coeffs);
        }
        xis.push(xi);
        pts_all.push((amp, pts));
    }
    let steps: Vec<CMat> = (0..kt).map(|k| &phis[k + 1] * &prop.steps[k] * &phi_inv[k]).collect();
    let inputs: Vec<CMat> = (0..kt).map(|k| &phis[k + 1] * &prop.inputs[k] * &xis[k]).collect();
    let weight = Field::from_vec(&phis[kt] * grid.constant(ONE).coeffs);
    let weight_mismatch = (&weight - &bundle.m_weight).l2_norm();
    let sys = ControlSystem { steps, inputs, obs: CMat::identity(d, d), m: weight, dt: grid.dt() };
    let hum = Hum::new(grid, sys, spec.obs_floor)?;
    let sol = hum.solve(&Field::from_vec(&phis[0] * &u_in.coeffs));
    let sources: Vec<Field> = (0..kt).map(|k| Field::from_vec(&xis[k] * &sol.sources[k].coeffs)).collect();
    let mut traj = vec![u_in.clone()];
    for k in 0..kt {
        let next = &(&prop.steps[k] * &traj[k].coeffs) + &(&prop.inputs[k] * &sources[k].coeffs);
        traj.push(Field::from_vec(next));
    }
    let one = grid.constant(ONE);
    let (b, residual) = terminal_constant(&traj[kt], &one);
    let inside = |iv: &[(f64, f64)], x: f64| {
        iv.iter().any(|&(a, b)| {
            let y = (x - a).rem_euclid(2.0 * PI);
            y > 0.0 && y < b - a
        })
    };
    let mut leak_omega1: f64 = 0.0;
    let mut leak_omega: f64 = 0.0;
    for k in 0..kt {
        let (amp, pts) = &pts_all[k];
        let g = crate::transform::eval_at(&sol.sources[k], pts);
        for ((x, a), gv) in xs.iter().zip(amp).zip(&g) {
            let v = (a * gv.re).abs();
            if !inside(&omega1, *x) {
                leak_omega1 = leak_omega1.max(v);
            }
            if !inside(&spec.omega, *x) {
                leak_omega = leak_omega.max(v);
            }
        }
    }
    let cost = sources.iter().map(|f| f.l2_norm()).fold(0.0, f64::max);
    let norm = hum.operator_norm();
    let un = u_in.l2_norm();
    let diag = Diagnostics {
        lambda_min: hum.lambda_min,
        lambda_max: hum.lambda_max,
        condition: hum.condition(),
        ridge: hum.ridge,
        gram_asymmetry: hum.asymmetry,
        terminal_residual: residual,
        cost,
        f2: if norm > 0.0 { 1.0 / norm } else { f64::INFINITY },
    };
    let w_sup = bundle.w.iter().map(|w| grid.to_physical_real(w).iter().fold(0.0f64, |a, v| a.max(v.abs()))).fold(0.0, f64::max);
    let m_dev = grid.to_physical_real(&bundle.m_weight).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let report = TildeReport {
        t1: bundle.t1(),
        omega2,
        warp: bundle.warp_sup,
        leak_omega1,
        leak_omega,
        weight_mismatch,
        relative_residual: if un > 0.0 { residual / un } else { 0.0 },
        w_sup,
        m_dev,
    };
    let result = ControlResult {
        f: midpoints(grid, sources.clone()),
        source: sources,
        adjoint: Trajectory::new(grid, sol.adjoint),
        traj: Trajectory::new(grid, traj),
        b,
        diag,
    };
    Ok((result, report))
}

/// Options of [`theta_full`].
#[derive(Clone, Debug, Serialize)]
pub struct ThetaOptions {
    /// Regularity index of `Λ_{h,s}`.
    pub s: f64,
    /// Fixed `h`; `None` selects the largest `2^{-k} ≤ h_max` with `‖𝒦‖ < k_target`.
    pub h: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub k_target: f64,
    /// Terminal tolerance relative to `‖v_in‖_{H^{s+3/2}}`.
    pub tol: f64,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self { s: 1.5, h: None, h_max: 1.0, h_min: 2f64.powi(-48), k_target: 0.25, tol: 1e-5 }
    }
}

/// Measurements of one [`theta_full`] call.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FullReport {
    pub h: f64,
    pub s: f64,
    pub k_norm: f64,
    /// `(h, ‖𝒦‖)` for every trial of the automatic selection.
    pub h_trials: Vec<(f64, f64)>,
    pub fixed_point_ratios: Vec<f64>,
    /// `max_k |Im v̂(0)(t_k) - Im v̂(0)(0)|`.
    pub mean_drift: f64,
    /// `‖v(T)‖_{H^s}`.
    pub terminal_hs: f64,
    /// `‖v_in‖_{H^{s+3/2}}`.
    pub data_norm: f64,
    pub relative_residual: f64,
    /// `sup_k ‖f_k‖_{H^s} / ‖v_in‖_{H^{s+3/2}}`.
    pub control_bound: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub pass: bool,
}

struct Lifted {
    hum: Hum,
    k: KOperator,
    lam0: Lambda,
    mids: Vec<Lambda>,
}

#[allow(clippy::too_many_arguments)]
fn lift(
    grid: &Grid,
    coeffs: &Coefficients,
    prop: &Propagator,
    tpk: &[CMat],
    chi: &CMat,
    pr: &RMat,
    h: f64,
    s: f64,
    floor: f64,
) -> Result<Lifted> {
    let kt = grid.kt;
    let dt = grid.dt();
    let params = LambdaParams::new(h, s, coeffs.c.clone())?;
    let lams = lambda_nodes(grid, &params, &coeffs.cut)?;
    let mids: Vec<Lambda> = if coeffs.c.len() <= 1 {
        vec![lams[0].clone(); kt]
    } else {
        (0..kt)
            .map(|k| lambda_at(grid, &params, (k as f64 + 0.5) * dt, &coeffs.cut))
            .collect::<Result<_>>()?
    };
    let steps: Vec<CMat> = (0..kt).map(|k| &lams[k + 1].op * &prop.steps[k] * &lams[k].inv).collect();
    let lb: Vec<CMat> = (0..kt).map(|k| &lams[k + 1].op * &prop.inputs[k]).collect();
    let inputs: Vec<CMat> = (0..kt).map(|k| &lb[k] * &mids[k].inv).collect();
    let sys = ControlSystem { steps, inputs, obs: chi.clone(), m: grid.constant(ONE), dt };
    let hum = Hum::new(grid, sys, floor)?;
    let inv = prop.inverses();
    let d2 = 2 * grid.dim();
    let mut x = RMat::zeros(d2, d2);
    for k in (0..kt).rev() {
        let actual = realify(&(&lb[k] * &tpk[k] * chi)) * pr * realify(&mids[k].inv);
        let ideal = realify(&(&hum.sys.inputs[k] * chi)) * pr;
        let dk = actual - ideal;
        let ut_inv = realify(&(&lams[k].op * &inv[k] * &lams[k + 1].inv));
        x = ut_inv * (x - dk * hum.control_map(k));
    }
    Ok(Lifted { hum, k: KOperator::new(x), lam0: lams[0].clone(), mids })
}

fn interval_average(grid: &Grid, nodes: &[CMat]) -> Vec<CMat> {
    let d = grid.dim();
    match nodes.len() {
        0 => vec![CMat::identity(d, d); grid.kt],
        1 => vec![nodes[0].clone(); grid.kt],
        _ => (0..grid.kt).map(|k| (&nodes[k] + &nodes[k + 1]) * C64::new(0.5, 0.0)).collect(),
    }
}

/// `Θ_{s,T} = Λ^{-1} Θ̃_T (I+𝒦)^{-1} Λ`: control of the paradifferential
/// equation `P v = T_p χ_ω Re f` from `v_in` to rest.
///
/// `tp` holds the node matrices of `T_p` (empty for `T_p = I`).
pub fn theta_full(
    grid: &Grid,
    coeffs: &Coefficients,
    tp: &[CMat],
    spec: &ControlSpec,
    v_in: &Field,
    opts: &ThetaOptions,
) -> Result<(ControlResult, FullReport)> {
    let prop = Propagator::build(grid, coeffs)?;
    theta_full_with(grid, coeffs, &prop, tp, spec, v_in, opts)
}

/// [`theta_full`] with a prebuilt propagator of `coeffs`.
pub fn theta_full_with(
    grid: &Grid,
    coeffs: &Coefficients,
    prop: &Propagator,
    tp: &[CMat],
    spec: &ControlSpec,
    v_in: &Field,
    opts: &ThetaOptions,
) -> Result<(ControlResult, FullReport)> {
    if coeffs.mode != Mode::Paradifferential {
        return Err(Error::Domain("theta_full needs paradifferential coefficients".into()));
    }
    grid.check(v_in)?;
    if v_in.mean().im.abs() > 1e-12 * (1.0 + v_in.l2_norm()) {
        return Err(Error::Domain(format!("Im v̂_in(0) = {:.3e} must vanish", v_in.mean().im)));
    }
    let kt = grid.kt;
    let chi = spec.chi_matrix(grid);
    let tpk = interval_average(grid, tp);
    let pr = re_projection(grid);
    let try_h = |h: f64| lift(grid, coeffs, prop, &tpk, &chi, &pr, h, opts.s, spec.obs_floor);
    let mut trials = Vec::new();
    let (h, lifted) = match opts.h {
        Some(h) => {
            let l = try_h(h)?;
            trials.push((h, l.k.norm));
            (h, l)
        }
        None => {
            // jump down by the observed power law, then climb back while 2h still contracts
            let mut h = opts.h_max;
            let mut best: Option<(f64, Lifted)> = None;
            loop {
                let l = try_h(h)?;
                trials.push((h, l.k.norm));
                if l.k.norm < opts.k_target {
                    best = Some((h, l));
                    break;
                }
                if h <= opts.h_min {
                    break;
                }
                let steps = ((l.k.norm / opts.k_target).ln() / (opts.s * 2f64.ln())).ceil().max(1.0) as i32;
                h = (h * 0.5f64.powi(steps)).max(opts.h_min);
            }
            let (mut h, mut l) = best.ok_or(Error::Contraction {
                what: "𝒦 at every trial h",
                factor: trials.last().map(|t| t.1).unwrap_or(f64::INFINITY),
            })?;
            while 2.0 * h <= opts.h_max && !trials.iter().any(|&(t, _)| t == 2.0 * h) {
                let up = try_h(2.0 * h)?;
                trials.push((2.0 * h, up.k.norm));
                if up.k.norm >= opts.k_target {
                    break;
                }
                h *= 2.0;
                l = up;
            }
            (h, l)
        }
    };
    let z = to_real(&(&lifted.lam0.op * &v_in.coeffs));
    let (y, ratios) = lifted.k.solve(&z)?;
    let y = Field::from_vec(to_complex(&y));
    let sol = lifted.hum.solve(&y);
    let f: Vec<Field> = (0..kt).map(|k| &lifted.mids[k].inv * &sol.controls[k]).collect();
    let source: Vec<Field> = (0..kt).map(|k| &tpk[k] * &(&chi * &f[k].re_part()).re_part()).collect();
    let traj = Trajectory::new(grid, prop.forward(v_in, Some(&source)));
    let vt = traj.last();
    let terminal_hs = vt.sobolev_norm(opts.s);
    let data_norm = v_in.sobolev_norm(opts.s + 1.5);
    let relative_residual = if data_norm > 0.0 { terminal_hs / data_norm } else { terminal_hs };
    let mean_drift = mean_invariant_drift(&traj);
    let fs = f.iter().map(|g| g.sobolev_norm(opts.s)).fold(0.0, f64::max);
    let report = FullReport {
        h,
        s: opts.s,
        k_norm: lifted.k.norm,
        h_trials: trials,
        fixed_point_ratios: ratios,
        mean_drift,
        terminal_hs,
        data_norm,
        relative_residual,
        control_bound: if data_norm > 0.0 { fs / data_norm } else { 0.0 },
        lambda_min: lifted.hum.lambda_min,
        lambda_max: lifted.hum.lambda_max,
        pass: relative_residual <= opts.tol && mean_drift <= 1e-10,
    };
    let diag = Diagnostics {
        lambda_min: lifted.hum.lambda_min,
        lambda_max: lifted.hum.lambda_max,
        condition: lifted.hum.condition(),
        ridge: lifted.hum.ridge,
        gram_asymmetry: lifted.hum.asymmetry,
        terminal_residual: vt.l2_norm(),
        cost: source.iter().map(|g| g.l2_norm()).fold(0.0, f64::max),
        f2: 0.0,
    };
    let result = ControlResult {
        b: vt.mean().im,
        f: midpoints(grid, f),
        source,
        adjoint: Trajectory::new(grid, sol.adjoint),
        traj,
        diag,
    };
    Ok((result, report))
}

/// Options of [`quasilinear_scheme`] and [`end_to_end`].
#[derive(Clone, Debug, Serialize)]
pub struct SchemeOptions {
    /// Stop when `‖u_{n+1} - u_n‖_{C⁰H^s} < tol · max(‖u_in‖_{H^s}, ‖u_{n+1}‖_{C⁰H^s})`.
    pub tol: f64,
    pub n_max: usize,
    /// Bound on `‖u_in‖_{H^{s+3/2}}`.
    pub eps0: f64,
    pub theta: ThetaOptions,
    /// CFL constant of the nonlinear interval shots and verification runs.
    pub c_cfl: f64,
    /// Run the nonlinear verification inside the scheme.
    pub verify: bool,
    /// Index `σ` of the physical residual `‖η‖_{H^{σ+1/2}} + ‖ψ‖_{H^σ}`.
    pub sigma: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            n_max: 20,
            eps0: 1e-2,
            theta: ThetaOptions::default(),
            c_cfl: 0.1,
            verify: true,
            sigma: 1.0,
        }
    }
}

/// One row of the iteration table.
#[derive(Clone, Debug, Serialize)]
pub struct SchemeIteration {
    pub n: usize,
    /// `‖u_{n+1} - u_n‖_{C⁰H^s}`.
    pub diff: f64,
    pub ratio: Option<f64>,
    pub h: f64,
    pub k_norm: f64,
    /// `sup_t ‖u_{n+1}‖_{H^s} / ‖u_in‖_{H^{s+3/2}}`, the measured `K₁`.
    pub k1: f64,
    /// `|Im ⟨u_in - z(0)⟩|` removed before the control solve.
    pub mean_fix: f64,
    /// Largest `|Im|` mean removed from the interval defects.
    pub shot_mean: f64,
    pub theta_residual: f64,
    /// Extreme eigenvalues of the HUM Gramian of this iteration.
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Output of [`quasilinear_scheme`].
#[derive(Clone, Debug)]
pub struct SchemeResult {
    /// Physical pressure samples `χ_ω(x_j) Re f(x_j)` per interval.
    pub p_ext: Vec<Vec<f64>>,
    /// The same pressures as fields on the lattice.
    pub p_fields: Vec<Field>,
    pub f: Vec<Field>,
    pub u: Trajectory,
    pub iterations: Vec<SchemeIteration>,
    pub converged: bool,
    /// `‖u(T)‖_{L²}` of the nonlinear run driven by `p_ext`.
    pub verification: Option<f64>,
}

struct NodeData {
    state: WaveState,
    v: Field,
    c: Field,
    tp: CMat,
}

fn node_data(model: &Model, u: &Field) -> Result<NodeData> {
    let state = model.from_u(u)?;
    let dn = model.dn_operator(&state.eta)?;
    let (v, c, p) = model.frozen_coefficients_with(&state, &dn.mat);
    let tp = paraop_matrix(&model.grid, &p, &model.cut);
    Ok(NodeData { state, v, c, tp })
}

/// Physical pressure `χ_ω(x_j) Re f(x_j)`.
pub fn pressure_samples(grid: &Grid, spec: &ControlSpec, f: &Field) -> Vec<f64> {
    let chi = spec.chi_samples(grid);
    grid.to_physical(f).iter().zip(&chi).map(|(z, c)| c * z.re).collect()
}

/// Quasi-linear iteration `f_{n+1} = Θ_{s,T}[X_n]`, with the nonlinear defect of
/// the frozen equation folded into the initial datum of the control problem.
///
/// The defect of interval `k` is the gap between one nonlinear step from
/// `u_n(t_k)` under the current pressure and the frozen linear step, so a fixed
/// point is a trajectory of the full system.
pub fn quasilinear_scheme(model: &Model, spec: &ControlSpec, u_in: &Field, opts: &SchemeOptions) -> Result<SchemeResult> {
    let grid = &model.grid;
    let (n, kt) = (grid.n, grid.kt);
    grid.check(u_in)?;
    let s = opts.theta.s;
    let mut u = vec![Field::zeros(n); kt + 1];
    let mut f = vec![Field::zeros(n); kt];
    let mut iterations = Vec::new();
    let scale = u_in.sobolev_norm(s);
    let data = u_in.sobolev_norm(s + 1.5);
    if data > opts.eps0 {
        return Err(Error::Smallness { what: "‖u_in‖_{H^{s+3/2}}", value: data, bound: opts.eps0 });
    }
    let chi = spec.chi_matrix(grid);
    let mut converged = scale == 0.0;
    let mut prev: Option<f64> = None;
    let mut bad = 0;
    let mut theta = opts.theta.clone();
    let sub = cfl_substeps(grid, opts.c_cfl);
    if scale > 0.0 {
        for it in 0..opts.n_max {
            let nodes: Vec<NodeData> = u.iter().map(|uk| node_data(model, uk)).collect::<Result<_>>()?;
            let mut coeffs = Coefficients::paradifferential(
                nodes.iter().map(|d| d.v.clone()).collect(),
                nodes.iter().map(|d| d.c.clone()).collect(),
            );
            coeffs.cut = model.cut;
            let tp: Vec<CMat> = nodes.iter().map(|d| d.tp.clone()).collect();
            let prop = Propagator::build(grid, &coeffs)?;
            // exact interval defect: one nonlinear shot from each node minus the frozen linear step
            let r: Vec<(Field, f64)> = (0..kt)
                .map(|k| {
                    let src = &chi * &f[k].re_part();
                    let p = grid.to_spectral_real(&pressure_samples(grid, spec, &f[k]))?;
                    let shot = model.to_u(&nonlinear_step(model, &nodes[k].state, &p, grid.dt(), sub)?)?;
                    let tbar = (&(&tp[k] * &src) + &(&tp[k + 1] * &src)).scale(0.5);
                    let lin = &(&prop.steps[k] * &u[k]) + &(&prop.inputs[k] * &tbar);
                    let mut d = &shot - &lin;
                    let drop = d.mean().im;
                    d.set(0, C64::new(d.mean().re, 0.0));
                    Ok((d, drop.abs()))
                })
                .collect::<Result<Vec<_>>>()?;
            let shot_mean = r.iter().map(|x| x.1).fold(0.0, f64::max);
            let r: Vec<Field> = r.into_iter().map(|x| x.0).collect();
            let inv = prop.inverses();
            let mut z = vec![Field::zeros(n); kt + 1];
            for k in (0..kt).rev() {
                z[k] = &inv[k] * &(&z[k + 1] - &r[k]);
            }
            let mut v_eff = u_in - &z[0];
            let mean_fix = v_eff.mean().im.abs();
            v_eff.set(0, C64::new(v_eff.mean().re, 0.0));
            let (res, rep) = theta_full_with(grid, &coeffs, &prop, &tp, spec, &v_eff, &theta)?;
            theta.h_max = (2.0 * rep.h).min(opts.theta.h_max);
            let next: Vec<Field> = (0..=kt).map(|k| &res.traj.values[k] + &z[k]).collect();
            let diff = next.iter().zip(&u).map(|(a, b)| (a - b).sobolev_norm(s)).fold(0.0, f64::max);
            let ratio = prev.map(|p| if p > 0.0 { diff / p } else { 0.0 });
            let k1 = next.iter().map(|x| x.sobolev_norm(s)).fold(0.0, f64::max) / data;
            iterations.push(SchemeIteration {
                n: it + 1,
                diff,
                ratio,
                h: rep.h,
                k_norm: rep.k_norm,
                k1,
                mean_fix,
                shot_mean,
                theta_residual: rep.relative_residual,
                lambda_min: res.diag.lambda_min,
                lambda_max: res.diag.lambda_max,
            });
            u = next;
            f = res.f.values;
            if let Some(r) = ratio {
                if r >= 1.0 {
                    bad += 1;
                    if bad >= 2 {
                        return Err(Error::Contraction { what: "quasi-linear scheme (try a smaller ε)", factor: r });
                    }
                }
            }
            prev = Some(diff);
            let size = u.iter().map(|x| x.sobolev_norm(s)).fold(scale, f64::max);
            if diff < opts.tol * size {
                converged = true;
                break;
            }
        }
    }
    let p_ext: Vec<Vec<f64>> = f.iter().map(|fk| pressure_samples(grid, spec, fk)).collect();
    let p_fields: Vec<Field> = p_ext
        .iter()
        .map(|p| grid.to_spectral_real(p))
        .collect::<Result<_>>()?;
    let verification = if opts.verify && scale > 0.0 {
        let state0 = model.from_u(u_in)?;
        let states = solve_nonlinear(model, &state0, &p_fields, opts.c_cfl)?;
        Some(model.to_u(states.last().expect("non-empty"))?.l2_norm())
    } else if opts.verify {
        Some(0.0)
    } else {
        None
    };
    Ok(SchemeResult { p_ext, p_fields, f, u: Trajectory::new(grid, u), iterations, converged, verification })
}

/// Free nonlinear evolution run backward from `state_t` at `T` to the nodes.
pub fn backward_free_flow(model: &Model, state_t: &WaveState, c_cfl: f64) -> Result<Vec<WaveState>> {
    let grid = &model.grid;
    let kt = grid.kt;
    let sub = cfl_substeps(grid, c_cfl);
    let zero = Field::zeros(grid.n);
    let mut out = vec![WaveState::zeros(grid.n); kt + 1];
    out[kt] = state_t.clone();
    for k in (0..kt).rev() {
        out[k] = nonlinear_step(model, &out[k + 1], &zero, -grid.dt(), sub)?;
    }
    Ok(out)
}

/// Verification record of [`end_to_end`].
#[derive(Clone, Debug, Serialize)]
pub struct EndToEndReport {
    /// `‖η(T)-η_fin‖_{H^{σ+1/2}} + ‖ψ(T)-ψ_fin‖_{H^σ}`.
    pub residual: f64,
    /// The same distance to the free target trajectory at every node.
    pub residual_curve: Vec<f64>,
    /// `max |P_ext(x_j)|` over sample points outside `ω`.
    pub outside_support: f64,
    /// `max |Im P_ext|` as a field (zero for real pressures).
    pub imaginary_part: f64,
    /// `sup_k ‖P_ext(t_k)‖_{L²}`.
    pub cost: f64,
    pub iterations: Vec<SchemeIteration>,
    pub converged: bool,
    pub tol: f64,
    pub pass: bool,
}

/// Pressure steering `state_in` to `state_fin` and its independent verification.
pub fn end_to_end(
    model: &Model,
    spec: &ControlSpec,
    state_in: &WaveState,
    state_fin: &WaveState,
    tol: f64,
    opts: &SchemeOptions,
) -> Result<(SchemeResult, EndToEndReport)> {
    let grid = &model.grid;
    let zero_target = state_fin.norm(0.0) == 0.0;
    let target = if zero_target {
        vec![WaveState::zeros(grid.n); grid.kt + 1]
    } else {
        backward_free_flow(model, state_fin, opts.c_cfl)?
    };
    let mut u_in = &model.to_u(state_in)? - &model.to_u(&target[0])?;
    u_in.set(0, C64::new(u_in.mean().re, 0.0));
    let scheme_opts = SchemeOptions { verify: false, ..opts.clone() };
    let scheme = quasilinear_scheme(model, spec, &u_in, &scheme_opts)?;
    let states = solve_nonlinear(model, state_in, &scheme.p_fields, opts.c_cfl)?;
    let residual_curve: Vec<f64> = states.iter().zip(&target).map(|(a, b)| a.sub(b).norm(opts.sigma)).collect();
    let residual = *residual_curve.last().expect("non-empty");
    let outside_support = scheme
        .p_ext
        .iter()
        .flat_map(|p| p.iter().enumerate().filter(|(j, _)| !spec.contains(grid.x(*j))).map(|(_, v)| v.abs()))
        .fold(0.0, f64::max);
    let imaginary_part = scheme
        .p_fields
        .iter()
        .map(|p| grid.to_physical(p).iter().map(|z| z.im.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let cost = scheme.p_fields.iter().map(|p| p.l2_norm()).fold(0.0, f64::max);
    let pass = residual <= tol && outside_support < 1e-12 && imaginary_part < 1e-12;
    let report = EndToEndReport {
        residual,
        residual_curve,
        outside_support,
        imaginary_part,
        cost,
        iterations: scheme.iterations.clone(),
        converged: scheme.converged,
        tol,
        pass,
    };
    Ok((scheme, report))
}
