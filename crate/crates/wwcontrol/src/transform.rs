//! Changes of variables `Φ = φ*⁻¹ψ*⁻¹Ψ₁` taking the paradifferential equation to
//! transport form, and the oscillatory conjugation `A` removing `W∂_x`.
//!
//! Two unrelated functions are both called β in the literature: the
//! diffeomorphism `β₁` of the torus, and the phase primitive of `A`, named
//! `β_W` here.

use std::f64::consts::PI;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::io::field_to_json;
use crate::linalg::{inverse, loglog_slope, op_norm, power_norm, CMat, LinearOp, C64};
use crate::spectral::{default_mx, Field, Grid, MultiplierKind};

const I: C64 = C64::new(0.0, 1.0);

/// `Σ û(k) e^{ikx}` at arbitrary points.
pub fn eval_at(u: &Field, xs: &[f64]) -> Vec<C64> {
    let n = u.nmax() as f64;
    xs.iter()
        .map(|&x| {
            let step = C64::from_polar(1.0, x);
            let mut z = C64::from_polar(1.0, -n * x);
            let mut acc = C64::new(0.0, 0.0);
            for c in u.coeffs.iter() {
                acc += c * z;
                z *= step;
            }
            acc
        })
        .collect()
}

fn eval_real(u: &Field, xs: &[f64]) -> Vec<f64> {
    eval_at(u, xs).into_iter().map(|z| z.re).collect()
}

pub(crate) fn nodes(m: usize) -> Vec<f64> {
    (0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect()
}

fn coeffs_of(samples: &[C64], n: usize) -> Field {
    Grid::standard(n).coefficients(samples, n)
}

fn real_coeffs(samples: &[f64], n: usize) -> Field {
    let c: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    coeffs_of(&c, n)
}

fn deriv(u: &Field) -> Field {
    Grid::standard(u.nmax()).dx(u)
}

fn primitive(u: &Field) -> Field {
    Grid::standard(u.nmax()).dx_inv(u)
}

/// Translation `h ↦ h(· − p)`.
fn translate(u: &Field, p: f64) -> Field {
    let mut out = u.clone();
    for (j, c) in out.coeffs.iter_mut().enumerate() {
        *c *= C64::from_polar(1.0, -(u.mode(j) as f64) * p);
    }
    out
}

/// Sample count for warped evaluations on a lattice with `n` modes.
fn fine(n: usize) -> usize {
    2 * default_mx(n)
}

/// Start index and weights of the four-point Lagrange interpolant at `t`.
pub fn lagrange4(ts: &[f64], t: f64) -> (usize, Vec<f64>) {
    let n = ts.len();
    if n == 1 {
        return (0, vec![1.0]);
    }
    if n < 4 {
        let k = ts.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let th = (t - ts[k]) / (ts[k + 1] - ts[k]);
        return (k, vec![1.0 - th, th]);
    }
    let k = ts.partition_point(|&s| s <= t).clamp(2, n - 2) - 2;
    let w = (0..4)
        .map(|i| {
            (0..4)
                .filter(|&j| j != i)
                .map(|j| (t - ts[k + j]) / (ts[k + i] - ts[k + j]))
                .product()
        })
        .collect();
    (k, w)
}

fn interp_scalar(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let (k, w) = lagrange4(ts, t);
    w.iter().enumerate().map(|(i, wi)| wi * ys[k + i]).sum()
}

fn interp_field(ts: &[f64], ys: &[Field], t: f64) -> Field {
    let (k, w) = lagrange4(ts, t);
    let mut out = Field::zeros(ys[k].nmax());
    for (i, wi) in w.iter().enumerate() {
        out = &out + &ys[k + i].scale(*wi);
    }
    out
}

/// Cumulative composite Simpson integral on a uniform lattice; odd end
/// points close with the three-point rule on the last interval.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            out[1] = 0.5 * h * (f[0] + f[1]);
        }
        return out;
    }
    for k in 1..n {
        out[k] = if k % 2 == 0 {
            out[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k])
        } else if k == 1 {
            h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2])
        } else {
            out[k - 1] + h / 12.0 * (5.0 * f[k] + 8.0 * f[k - 1] - f[k - 2])
        };
    }
    out
}

/// Second-order time derivative of node samples.
fn ddt(ys: &[Field], h: f64) -> Vec<Field> {
    let n = ys.len();
    if n < 3 {
        let d = if n == 2 { (&ys[1] - &ys[0]).scale(1.0 / h) } else { Field::zeros(ys[0].nmax()) };
        return vec![d; n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (&(&ys[1].scale(4.0) - &ys[0].scale(3.0)) - &ys[2]).scale(0.5 / h)
            } else if k == n - 1 {
                (&(&ys[n - 1].scale(3.0) - &ys[n - 2].scale(4.0)) + &ys[n - 3]).scale(0.5 / h)
            } else {
                (&ys[k + 1] - &ys[k - 1]).scale(0.5 / h)
            }
        })
        .collect()
}

fn expand<T: Clone>(v: &[T], len: usize, neutral: T) -> Result<Vec<T>> {
    match v.len() {
        0 => Ok(vec![neutral; len]),
        1 => Ok(vec![v[0].clone(); len]),
        n if n == len => Ok(v.to_vec()),
        n => Err(Error::Length { expected: len, got: n }),
    }
}

/// Which half of the diffeomorphism pair a warp uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `Ψ₁ h = (1+∂β̃₁)^{1/2} h(·+β̃₁)`.
    Forward,
    /// `Ψ₁⁻¹ h = (1+∂β₁)^{1/2} h(·+β₁)`.
    Inverse,
}

/// The pair `y = x + β₁(x) ⇔ x = y + β̃₁(y)` at one instant.
#[derive(Clone, Debug)]
pub struct Warp {
    pub beta1: Field,
    pub beta1_tilde: Field,
}

impl Warp {
    pub fn identity(n: usize) -> Self {
        Self { beta1: Field::zeros(n), beta1_tilde: Field::zeros(n) }
    }

    fn beta(&self, dir: Direction) -> &Field {
        match dir {
            Direction::Forward => &self.beta1_tilde,
            Direction::Inverse => &self.beta1,
        }
    }
}

/// Jacobian factors `(1+∂β)^{1/2}` and warped points `x+β(x)` at `xs`.
fn warp_samples(beta: &Field, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = eval_real(beta, xs);
    let db = eval_real(&deriv(beta), xs);
    let mut jac = Vec::with_capacity(xs.len());
    for d in &db {
        if 1.0 + d <= 0.5 {
            return Err(Error::Smallness { what: "1 - (1+∂_xβ)", value: -d, bound: 0.5 });
        }
        jac.push((1.0 + d).sqrt());
    }
    let pts = xs.iter().zip(&b).map(|(x, b)| x + b).collect();
    Ok((jac, pts))
}

/// `Ψ₁u` (forward) or `Ψ₁⁻¹u` (inverse) by trigonometric interpolation at
/// the warped points, truncated to `|n| ≤ n_out`.
pub fn psi1_apply(warp: &Warp, u: &Field, dir: Direction, n_out: usize) -> Result<Field> {
    let beta = warp.beta(dir);
    let xs = nodes(fine(n_out.max(u.nmax()).max(beta.nmax())));
    let (jac, pts) = warp_samples(beta, &xs)?;
    let vals = eval_at(u, &pts);
    let s: Vec<C64> = vals.iter().zip(&jac).map(|(v, j)| v * *j).collect();
    Ok(coeffs_of(&s, n_out))
}

/// Matrix of [`psi1_apply`] from `|n| ≤ n_in` to `|n| ≤ n_out`.
pub fn psi1_matrix(warp: &Warp, dir: Direction, n_in: usize, n_out: usize) -> Result<CMat> {
    let beta = warp.beta(dir);
    let xs = nodes(fine(n_out.max(n_in).max(beta.nmax())));
    let (jac, pts) = warp_samples(beta, &xs)?;
    let d_in = 2 * n_in + 1;
    let mut m = CMat::zeros(2 * n_out + 1, d_in);
    for j in 0..d_in {
        let k = j as f64 - n_in as f64;
        let s: Vec<C64> = pts.iter().zip(&jac).map(|(p, a)| C64::from_polar(*a, k * p)).collect();
        m.set_column(j, &coeffs_of(&s, n_out).coeffs);
    }
    Ok(m)
}

/// Output of [`diffeo_from_c`].
#[derive(Clone, Debug)]
pub struct Diffeo {
    /// Lattice and time interval `[0,T]` of the input.
    pub grid: Grid,
    pub beta1: Vec<Field>,
    pub beta1_tilde: Vec<Field>,
    pub m: Vec<f64>,
    /// `ψ(t_k) = ∫₀^{t_k} m`.
    pub psi: Vec<f64>,
    pub t1: f64,
    /// `ρ(s_j) = m(ψ⁻¹(s_j))` on the uniform lattice `s_j = jT₁/K_t`.
    pub rho: Vec<f64>,
    /// `max |x + β₁(x) + β̃₁(x + β₁(x)) − x|` over the grid.
    pub round_trip: f64,
    /// `sup_t max(‖∂_xβ₁‖_∞, ‖∂_yβ̃₁‖_∞)`.
    pub jacobian_dev: f64,
}

impl Diffeo {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.grid.kt).map(|k| self.grid.time(k)).collect()
    }

    pub fn s_times(&self) -> Vec<f64> {
        (0..=self.grid.kt).map(|j| self.t1 * j as f64 / self.grid.kt as f64).collect()
    }

    pub fn warp(&self, k: usize) -> Warp {
        Warp { beta1: self.beta1[k].clone(), beta1_tilde: self.beta1_tilde[k].clone() }
    }

    /// Warp at an arbitrary time by cubic interpolation of the node fields.
    pub fn warp_at(&self, t: f64) -> Warp {
        let ts = self.times();
        Warp {
            beta1: interp_field(&ts, &self.beta1, t),
            beta1_tilde: interp_field(&ts, &self.beta1_tilde, t),
        }
    }

    pub fn psi_at(&self, t: f64) -> f64 {
        interp_scalar(&self.times(), &self.psi, t)
    }

    pub fn psi_inv(&self, s: f64) -> f64 {
        interp_scalar(&self.psi, &self.times(), s)
    }

    pub fn m_at(&self, t: f64) -> f64 {
        interp_scalar(&self.times(), &self.m, t)
    }
}

fn newton_inverse(beta: &Field, y: f64) -> Result<f64> {
    let db = deriv(beta);
    let mut x = y - eval_real(beta, &[y])[0];
    for it in 0..50 {
        let r = x + eval_real(beta, &[x])[0] - y;
        if r.abs() < 1e-12 {
            return Ok(x);
        }
        x -= r / (1.0 + eval_real(&db, &[x])[0]);
        if it == 49 {
            return Err(Error::NoConvergence { what: "diffeomorphism inverse", iterations: 50, last: r.abs() });
        }
    }
    Ok(x)
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// `m`, `β₁ = ∂_x⁻¹[m^{2/3}c^{−2/3} − 1]` and its inverse `β̃₁` at every node,
/// the time change `ψ`, `T₁` and `ρ`.
///
/// `c` holds one sample (constant in time) or `K_t + 1` node samples.
pub fn diffeo_from_c(grid: &Grid, c: &[Field]) -> Result<Diffeo> {
    let nodes_t = grid.kt + 1;
    let n = grid.n;
    let c = expand(c, nodes_t, grid.constant(C64::new(1.0, 0.0)))?;
    let xs = nodes(fine(n));
    let ys = nodes(grid.mx);
    let mut beta1: Vec<Field> = Vec::with_capacity(nodes_t);
    let mut beta1_tilde: Vec<Field> = Vec::with_capacity(nodes_t);
    let mut m: Vec<f64> = Vec::with_capacity(nodes_t);
    let mut round_trip: f64 = 0.0;
    let mut jacobian_dev: f64 = 0.0;
    for k in 0..nodes_t {
        if k > 0 && c[k] == c[k - 1] {
            beta1.push(beta1[k - 1].clone());
            beta1_tilde.push(beta1_tilde[k - 1].clone());
            m.push(m[k - 1]);
            continue;
        }
        let cs = eval_real(&c[k].resize(n), &xs);
        if let Some(bad) = cs.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!("c must be positive, found {bad}")));
        }
        let w: Vec<f64> = cs.iter().map(|v| v.powf(-2.0 / 3.0)).collect();
        let avg = w.iter().sum::<f64>() / w.len() as f64;
        let mk = avg.powf(-1.5);
        let g: Vec<f64> = w.iter().map(|v| mk.powf(2.0 / 3.0) * v - 1.0).collect();
        let mut gf = real_coeffs(&g, n);
        gf.set(0, C64::new(0.0, 0.0));
        let b = primitive(&gf);
        let db = sup_abs(&eval_real(&deriv(&b), &xs));
        if db >= 0.5 {
            return Err(Error::Smallness { what: "‖∂_xβ₁‖_∞", value: db, bound: 0.5 });
        }
        let mut bt = Vec::with_capacity(ys.len());
        for &y in &ys {
            bt.push(newton_inverse(&b, y)? - y);
        }
        let bt = real_coeffs(&bt, n);
        let dbt = sup_abs(&eval_real(&deriv(&bt), &xs));
        if dbt >= 0.5 {
            return Err(Error::Smallness { what: "‖∂_yβ̃₁‖_∞", value: dbt, bound: 0.5 });
        }
        let fwd: Vec<f64> = ys.iter().zip(eval_real(&b, &ys)).map(|(x, v)| x + v).collect();
        let back = eval_real(&bt, &fwd);
        for ((x, y), v) in ys.iter().zip(&fwd).zip(&back) {
            round_trip = round_trip.max((y + v - x).abs());
        }
        jacobian_dev = jacobian_dev.max(db).max(dbt);
        beta1.push(b);
        beta1_tilde.push(bt);
        m.push(mk);
    }
    let psi = cumulative_simpson(&m, grid.dt());
    let t1 = psi[grid.kt];
    let mut d = Diffeo { grid: grid.clone(), beta1, beta1_tilde, m, psi, t1, rho: vec![], round_trip, jacobian_dev };
    d.rho = d.s_times().iter().map(|&s| d.m_at(d.psi_inv(s))).collect();
    Ok(d)
}

/// Conjugation data `Φ = φ*⁻¹ψ*⁻¹Ψ₁` for `∂_t + V∂_x + iL^{1/2}cL^{1/2} + R₂`.
#[derive(Clone, Debug)]
pub struct PhiBundle {
    pub diffeo: Diffeo,
    /// Lattice on `[0, T₁]` with the same `N` and `K_t`.
    pub s_grid: Grid,
    /// `p(s_j)`.
    pub p_shift: Vec<f64>,
    /// `W(s_j) = a₇`, zero mean.
    pub w: Vec<Field>,
    /// `M(x) = (1 + ∂_xβ̃₁(T, x − p(T₁)))^{1/2}`.
    pub m_weight: Field,
    /// `a₃` at the original nodes `t_k`.
    pub a3: Vec<Field>,
    /// Largest `|∫W|/2π` before the mean was removed.
    pub w_mean_residual: f64,
    /// `|p(T₁) + (1/2π)∫₀ᵀ∫a₃|`.
    pub p_end_check: f64,
    /// `‖W‖_{C⁰H²} / (‖(c−1,V)‖_{C⁰H²} + ‖∂_tc‖_{C⁰H¹})`.
    pub w_bound_ratio: f64,
    /// `sup_k ‖Ψ₁R₂Ψ₁⁻¹‖` on the lattice.
    pub r2_conj_norm: f64,
    /// `sup_t (‖β₁‖_∞ + |p(ψ(t))|)`.
    pub warp_sup: f64,
    /// Output lattice of [`PhiBundle::apply`].
    pub n_pad: usize,
}

/// Builds `β₁, β̃₁, m, T₁, p, W, M`.
///
/// `c`, `v` and `r2` hold zero (neutral), one (constant) or `K_t + 1` samples.
/// `n_pad` is the lattice of [`PhiBundle::apply`]; twice `N` is ample for
/// small coefficients.
pub fn build_phi(grid: &Grid, c: &[Field], v: &[Field], r2: &[CMat], n_pad: usize) -> Result<PhiBundle> {
    let nt = grid.kt + 1;
    let n = grid.n;
    let diffeo = diffeo_from_c(grid, c)?;
    let v = expand(v, nt, Field::zeros(n))?;
    let ts = diffeo.times();
    let dbeta = ddt(&diffeo.beta1, grid.dt());
    let xs = nodes(fine(n));
    let mut a3 = Vec::with_capacity(nt);
    for k in 0..nt {
        let bt = &diffeo.beta1_tilde[k];
        let (_, pts) = warp_samples(bt, &xs)?;
        let a1 = eval_real(&dbeta[k], &pts);
        let bv = eval_real(&v[k].resize(n), &pts);
        let dbt = eval_real(&deriv(bt), &xs);
        let s: Vec<f64> = (0..xs.len()).map(|j| a1[j] + bv[j] / (1.0 + dbt[j])).collect();
        a3.push(real_coeffs(&s, n));
    }
    let s_grid = grid.with_time(diffeo.t1, grid.kt);
    let ss = diffeo.s_times();
    let a6: Vec<Field> = ss
        .iter()
        .zip(&diffeo.rho)
        .map(|(&s, &r)| interp_field(&ts, &a3, diffeo.psi_inv(s)).scale(1.0 / r))
        .collect();
    let mean6: Vec<f64> = a6.iter().map(|f| f.mean().re).collect();
    let p: Vec<f64> = cumulative_simpson(&mean6, s_grid.dt()).into_iter().map(|v| -v).collect();
    let mut w_mean_residual: f64 = 0.0;
    let w: Vec<Field> = a6
        .iter()
        .zip(&p)
        .zip(&mean6)
        .map(|((f, &pj), &mj)| {
            let mut out = translate(f, pj);
            let z = out.get(0) - mj;
            w_mean_residual = w_mean_residual.max(z.norm());
            out.set(0, C64::new(0.0, 0.0));
            out
        })
        .collect();
    let mean3: Vec<f64> = a3.iter().map(|f| f.mean().re).collect();
    let direct = -cumulative_simpson(&mean3, grid.dt())[grid.kt];
    let p_end = p[grid.kt];
    let xg = nodes(grid.mx);
    let shifted: Vec<f64> = xg.iter().map(|x| x - p_end).collect();
    let dbt_end = eval_real(&deriv(&diffeo.beta1_tilde[grid.kt]), &shifted);
    let m_weight = real_coeffs(&dbt_end.iter().map(|d| (1.0 + d).sqrt()).collect::<Vec<_>>(), n);

    let c_full = expand(c, nt, grid.constant(C64::new(1.0, 0.0)))?;
    let one = grid.constant(C64::new(1.0, 0.0));
    let dc = ddt(&c_full, grid.dt());
    let mut num: f64 = 0.0;
    let mut den_a: f64 = 0.0;
    let mut den_b: f64 = 0.0;
    for k in 0..nt {
        num = num.max(w[k].sobolev_norm(2.0));
        den_a = den_a.max((&c_full[k].resize(n) - &one).sobolev_norm(2.0) + v[k].resize(n).sobolev_norm(2.0));
        den_b = den_b.max(dc[k].sobolev_norm(1.0));
    }
    let den = den_a + den_b;
    let w_bound_ratio = if den > 0.0 { num / den } else { 0.0 };

    let mut r2_conj_norm: f64 = 0.0;
    if !r2.is_empty() {
        let r2 = expand(r2, nt, CMat::zeros(grid.dim(), grid.dim()))?;
        for k in 0..nt {
            if k > 0 && r2[k] == r2[k - 1] && diffeo.beta1[k] == diffeo.beta1[k - 1] {
                continue;
            }
            let wk = diffeo.warp(k);
            let f = psi1_matrix(&wk, Direction::Forward, n, n)?;
            let b = psi1_matrix(&wk, Direction::Inverse, n, n)?;
            r2_conj_norm = r2_conj_norm.max(op_norm(&(f * &r2[k] * b)));
        }
    }
    let mut warp_sup: f64 = 0.0;
    for k in 0..nt {
        let b = sup_abs(&eval_real(&diffeo.beta1[k], &xs));
        let pk = interp_scalar(&ss, &p, diffeo.psi[k]);
        warp_sup = warp_sup.max(b + pk.abs());
    }
    Ok(PhiBundle {
        diffeo,
        s_grid,
        p_shift: p,
        w,
        m_weight,
        a3,
        w_mean_residual,
        p_end_check: (p_end - direct).abs(),
        w_bound_ratio,
        r2_conj_norm,
        warp_sup,
        n_pad,
    })
}

impl PhiBundle {
    pub fn t1(&self) -> f64 {
        self.diffeo.t1
    }

    /// `p(s)` by cubic interpolation.
    pub fn p_at(&self, s: f64) -> f64 {
        interp_scalar(&self.diffeo.s_times(), &self.p_shift, s)
    }

    /// Shift `p(ψ(t))` seen from the original time `t`.
    pub fn shift_at(&self, t: f64) -> f64 {
        self.p_at(self.diffeo.psi_at(t))
    }

    /// `Φ` on the original nodes: `v(ψ(t_k)) = φ*⁻¹Ψ₁(t_k) u(t_k)` on the padded
    /// lattice, stamped at the image times `ψ(t_k)`.
    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        let d = &self.diffeo;
        if traj.values.len() != d.grid.kt + 1 {
            return Err(Error::Length { expected: d.grid.kt + 1, got: traj.values.len() });
        }
        let mut values = Vec::with_capacity(traj.values.len());
        for (k, u) in traj.values.iter().enumerate() {
            let v = psi1_apply(&d.warp(k), u, Direction::Forward, self.n_pad)?;
            values.push(translate(&v, self.p_at(d.psi[k])));
        }
        Ok(Trajectory { t: d.psi.clone(), values })
    }

    /// `Φ⁻¹` of a trajectory stamped at `ψ(t_k)`, truncated to `|n| ≤ n_out`.
    pub fn inverse(&self, traj: &Trajectory, n_out: usize) -> Result<Trajectory> {
        let d = &self.diffeo;
        if traj.values.len() != d.grid.kt + 1 {
            return Err(Error::Length { expected: d.grid.kt + 1, got: traj.values.len() });
        }
        let mut values = Vec::with_capacity(traj.values.len());
        for (k, v) in traj.values.iter().enumerate() {
            let w = translate(v, -self.p_at(d.psi[k]));
            values.push(psi1_apply(&d.warp(k), &w, Direction::Inverse, n_out)?);
        }
        Ok(Trajectory { t: d.times(), values })
    }

    /// Square matrix of `φ*⁻¹Ψ₁(t)` on `|n| ≤ n`.
    pub fn phi_matrix(&self, t: f64, n: usize) -> Result<CMat> {
        let mut m = psi1_matrix(&self.diffeo.warp_at(t), Direction::Forward, n, n)?;
        let p = self.shift_at(t);
        for i in 0..m.nrows() {
            let ph = C64::from_polar(1.0, -(i as f64 - n as f64) * p);
            for j in 0..m.ncols() {
                m[(i, j)] *= ph;
            }
        }
        Ok(m)
    }

    /// `(Φ⁻¹h)(t,x) = (1+∂_xβ₁)^{1/2} h(x + β₁(t,x) + p(ψ(t)))` pointwise, for
    /// `h` given as a function of the transformed variable.
    pub fn inverse_pointwise(&self, t: f64, xs: &[f64], h: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let (jac, pts) = self.inverse_points(t, xs)?;
        Ok(pts.iter().zip(&jac).map(|(y, j)| j * h(*y)).collect())
    }

    /// Jacobian factors `(1+∂_xβ₁)^{1/2}` and transformed points
    /// `x + β₁(t,x) + p(ψ(t))` of [`PhiBundle::inverse_pointwise`].
    pub fn inverse_points(&self, t: f64, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = self.diffeo.warp_at(t);
        let (jac, pts) = warp_samples(&w.beta1, xs)?;
        let p = self.shift_at(t);
        Ok((jac, pts.into_iter().map(|y| y + p).collect()))
    }

    /// `ω₂`: each interval of `ω₁` shrunk by the worst warp plus one cell of
    /// the fine grid.
    pub fn margins(&self, omega1: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
        let shrink = self.warp_sup + 2.0 * PI / self.diffeo.grid.mx as f64;
        omega1
            .iter()
            .map(|&(a, b)| {
                if b - a >= 2.0 * PI - 1e-12 {
                    Ok((a, b))
                } else if b - a > 2.0 * shrink {
                    Ok((a + shrink, b - shrink))
                } else {
                    Err(Error::Margin { warp: shrink, margin: 0.5 * (b - a) })
                }
            })
            .collect()
    }

    /// `{beta1, m, T1, p_shift, W, M}`.
    pub fn to_json(&self) -> Value {
        json!({
            "beta1": self.diffeo.beta1.iter().map(field_to_json).collect::<Vec<_>>(),
            "m": self.diffeo.m,
            "T1": self.diffeo.t1,
            "p_shift": self.p_shift,
            "W": self.w.iter().map(field_to_json).collect::<Vec<_>>(),
            "M": field_to_json(&self.m_weight),
        })
    }
}

/// Cubic-in-time resampling of a trajectory.
pub fn resample(traj: &Trajectory, times: &[f64]) -> Trajectory {
    Trajectory {
        t: times.to_vec(),
        values: times.iter().map(|&t| interp_field(&traj.t, &traj.values, t)).collect(),
    }
}

/// Order check of `Ψ₁LΨ₁⁻¹ − (1+∂β̃)^{−3/2}L − (9/8)∂²β̃(1+∂β̃)^{−5/2}|D|^{−1/2}∂_x`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LCheck {
    pub ns: Vec<i64>,
    /// `‖residual·e^{inx}‖_{L²}`.
    pub residual: Vec<f64>,
    /// `‖Ψ₁LΨ₁⁻¹e^{inx} − (1+∂β̃)^{−3/2}Le^{inx}‖ / ‖(1+∂β̃)^{−3/2}Le^{inx}‖`.
    pub principal_rel: Vec<f64>,
    pub slope: f64,
}

/// Measures the two-term expansion of `Ψ₁LΨ₁⁻¹` mode by mode on a lattice
/// with `n_big` modes (`n_big` well above `max ns`).
pub fn conj_check_l(grid: &Grid, warp: &Warp, ns: &[i64], n_big: usize) -> Result<LCheck> {
    let big = grid.with_modes(n_big);
    let ell = big.multiplier_diag(MultiplierKind::L);
    let xs = nodes(fine(n_big));
    let bt = &warp.beta1_tilde;
    let d1 = eval_real(&deriv(bt), &xs);
    let d2 = eval_real(&deriv(&deriv(bt)), &xs);
    let mut residual = Vec::new();
    let mut principal_rel = Vec::new();
    for &n in ns {
        let e = big.unit(n, C64::new(1.0, 0.0));
        let v = psi1_apply(warp, &e, Direction::Inverse, n_big)?;
        let lv = Field::from_vec(v.coeffs.component_mul(&ell));
        let conj = psi1_apply(warp, &lv, Direction::Forward, n_big)?;
        let ln = grid.ell(n as f64);
        let sub = if n == 0 { 0.0 } else { n as f64 / (n.abs() as f64).sqrt() };
        let mut p0 = Vec::with_capacity(xs.len());
        let mut p1 = Vec::with_capacity(xs.len());
        for (j, &x) in xs.iter().enumerate() {
            let z = C64::from_polar(1.0, n as f64 * x);
            let a = 1.0 + d1[j];
            p0.push(z * (ln * a.powf(-1.5)));
            p1.push(z * I * (1.125 * d2[j] * a.powf(-2.5) * sub));
        }
        let f0 = coeffs_of(&p0, n_big);
        let f1 = coeffs_of(&p1, n_big);
        let r0 = &conj - &f0;
        principal_rel.push(r0.l2_norm() / f0.l2_norm());
        residual.push((&r0 - &f1).l2_norm());
    }
    let x: Vec<f64> = ns.iter().map(|&n| n.abs() as f64).collect();
    let slope = if residual.iter().all(|r| *r > 0.0) { loglog_slope(&x, &residual) } else { 0.0 };
    Ok(LCheck { ns: ns.to_vec(), residual, principal_rel, slope })
}

/// Sign choices in the construction of `A`; the defaults are the ones for
/// which `W∂_x` and the order-1/2 remainder cancel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AOptions {
    /// Include the time-only phase `β₀`.
    pub beta0: bool,
    /// Use `β_W = +(2/3)∂_x⁻¹W` instead of `−(2/3)∂_x⁻¹W`.
    pub flip_transport: bool,
    /// Use `+(9/8)(∂_xβ)²` and `γ = +(2/3)i sgn ξ ∂_x⁻¹(...)` instead of the
    /// negated pair.
    pub flip_lower: bool,
}

impl Default for AOptions {
    fn default() -> Self {
        Self { beta0: true, flip_transport: false, flip_lower: false }
    }
}

/// `Au = Σ û_k q(t,x,k) e^{i(kx + β(t,x)|k|^{1/2})}` at every node.
#[derive(Clone, Debug)]
pub struct AOperator {
    /// Lattice and time interval of the nodes.
    pub grid: Grid,
    pub beta_w: Vec<Field>,
    pub beta0: Vec<f64>,
    /// `β = β₀ + β_W`.
    pub beta: Vec<Field>,
    /// Real `g` with `q(t,x,ξ) = exp(±(2/3) i sgn(ξ) g(t,x))`.
    pub gamma: Vec<Field>,
    pub mats: Vec<CMat>,
    /// Largest `|mean|` of the integrand of `γ` (zero when `β₀` is included).
    pub integrand_mean: f64,
    pub opts: AOptions,
}

impl AOperator {
    /// `‖A(t_k) − I‖_{L² → H^{−1/2}}`.
    pub fn deviation(&self, k: usize) -> f64 {
        let d = self.grid.dim();
        LinearOp::new(&self.mats[k] - CMat::identity(d, d)).norm_between(&self.grid, 0.0, -0.5)
    }

    /// Power-iteration value of the same norm.
    pub fn deviation_power(&self, k: usize) -> f64 {
        let d = self.grid.dim();
        let w = self.grid.sobolev_weights(-0.5);
        let m = CMat::from_fn(d, d, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            (self.mats[k][(i, j)] - id) * w[i]
        });
        power_norm(&m, 400, 1e-12)
    }
}

fn check_zero_mean(w: &[Field]) -> Result<()> {
    for f in w {
        if f.mean().norm() > 1e-12 * (1.0 + f.l2_norm()) {
            return Err(Error::Domain(format!("W must have zero mean, found {:.3e}", f.mean().norm())));
        }
    }
    Ok(())
}

/// Assembles `A(t_k)` from `W` sampled on the nodes of `grid` (one sample
/// means constant in time).
pub fn build_a(grid: &Grid, w: &[Field], opts: AOptions) -> Result<AOperator> {
    check_zero_mean(w)?;
    let nt = grid.kt + 1;
    let n = grid.n;
    let w: Vec<Field> = expand(w, nt, Field::zeros(n))?.iter().map(|f| f.resize(n)).collect();
    let sw = if opts.flip_transport { 2.0 / 3.0 } else { -2.0 / 3.0 };
    let sl = if opts.flip_lower { 1.0 } else { -1.0 };
    let beta_w: Vec<Field> = w.iter().map(|f| grid.dx_inv(f).scale(sw)).collect();
    let dbw: Vec<Field> = ddt(&w, grid.dt()).iter().map(|f| grid.dx_inv(f).scale(sw)).collect();
    let sq: Vec<Field> = beta_w
        .iter()
        .map(|b| {
            let d = grid.dx(b);
            grid.product(&d, &d).re_part()
        })
        .collect();
    let db0: Vec<f64> = if opts.beta0 {
        sq.iter().map(|s| -sl * 1.125 * s.mean().re).collect()
    } else {
        vec![0.0; nt]
    };
    let beta0 = cumulative_simpson(&db0, grid.dt());
    let mut integrand_mean: f64 = 0.0;
    let mut gamma = Vec::with_capacity(nt);
    for k in 0..nt {
        let mut integ = &dbw[k] + &sq[k].scale(sl * 1.125);
        integ.set(0, integ.get(0) + db0[k]);
        let mean = integ.mean().norm();
        integrand_mean = integrand_mean.max(mean);
        if opts.beta0 && mean > 1e-10 * (1.0 + integ.l2_norm()) {
            return Err(Error::Domain(format!("γ integrand has mean {mean:.3e}")));
        }
        gamma.push(grid.dx_inv(&integ));
    }
    let beta: Vec<Field> = beta_w
        .iter()
        .zip(&beta0)
        .map(|(b, b0)| {
            let mut f = b.clone();
            f.set(0, C64::new(*b0, 0.0));
            f
        })
        .collect();
    let xs = nodes(grid.mx);
    let d = grid.dim();
    let mut mats: Vec<CMat> = Vec::with_capacity(nt);
    for k in 0..nt {
        if k > 0 && beta[k] == beta[k - 1] && gamma[k] == gamma[k - 1] {
            let prev = mats[k - 1].clone();
            mats.push(prev);
            continue;
        }
        let b = eval_real(&beta[k], &xs);
        let g = eval_real(&gamma[k], &xs);
        let mut a = CMat::zeros(d, d);
        for j in 0..d {
            let kk = grid.mode(j);
            let sg = kk.signum() as f64;
            let rt = (kk.abs() as f64).sqrt();
            let s: Vec<C64> = (0..xs.len())
                .map(|i| C64::from_polar(1.0, kk as f64 * xs[i] + b[i] * rt + sl * (2.0 / 3.0) * sg * g[i]))
                .collect();
            a.set_column(j, &grid.coefficients(&s, n).coeffs);
        }
        mats.push(a);
    }
    Ok(AOperator { grid: grid.clone(), beta_w, beta0, beta, gamma, mats, integrand_mean, opts })
}

/// Order and size of `R₅ = A⁻¹([∂_t,A] + R₄A + W∂_xA + i[L,A])`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DefectReport {
    pub ns: Vec<i64>,
    /// `max_k max_± ‖R₅(t_k)e^{±inx}‖_{L²}`.
    pub column_norms: Vec<f64>,
    pub slope: f64,
    /// `max_k ‖A(t_k)‖‖A(t_k)⁻¹‖`.
    pub condition: f64,
    /// `max_k ‖R₅(t_k)‖_{L²→L²}` (power iteration).
    pub norm: f64,
    /// `‖W‖_{C⁰H²}`, the size the remainder is compared with.
    pub w_size: f64,
}

/// `R₅` at every node by dense algebra, `∂_tA` by centered differences.
pub fn conjugation_defect(w: &[Field], r4: &[CMat], a: &AOperator, ns: &[i64]) -> Result<(Vec<LinearOp>, DefectReport)> {
    check_zero_mean(w)?;
    let grid = &a.grid;
    let nt = grid.kt + 1;
    let d = grid.dim();
    let w: Vec<Field> = expand(w, nt, Field::zeros(grid.n))?.iter().map(|f| f.resize(grid.n)).collect();
    let r4 = expand(r4, nt, CMat::zeros(d, d))?;
    let ell = grid.multiplier_diag(MultiplierKind::L);
    let dx = grid.multiplier_diag(MultiplierKind::Dx);
    let h = grid.dt();
    let mut out = Vec::with_capacity(nt);
    let mut condition: f64 = 0.0;
    let mut norm: f64 = 0.0;
    let mut cols = vec![0.0f64; ns.len()];
    for k in 0..nt {
        let am = &a.mats[k];
        let dadt = if nt < 3 {
            CMat::zeros(d, d)
        } else if k == 0 {
            (&a.mats[1] * C64::new(4.0, 0.0) - &a.mats[0] * C64::new(3.0, 0.0) - &a.mats[2]) * C64::new(0.5 / h, 0.0)
        } else if k == nt - 1 {
            (&a.mats[k] * C64::new(3.0, 0.0) - &a.mats[k - 1] * C64::new(4.0, 0.0) + &a.mats[k - 2])
                * C64::new(0.5 / h, 0.0)
        } else {
            (&a.mats[k + 1] - &a.mats[k - 1]) * C64::new(0.5 / h, 0.0)
        };
        let wm = grid.mul_matrix_re(&w[k]);
        let dxa = CMat::from_fn(d, d, |i, j| dx[i] * am[(i, j)]);
        let comm = CMat::from_fn(d, d, |i, j| I * (ell[i] - ell[j]) * am[(i, j)]);
        let x = dadt + &r4[k] * am + wm * dxa + comm;
        let ainv = inverse(am, "A")?;
        let cond = power_norm(am, 200, 1e-10) * power_norm(&ainv, 200, 1e-10);
        if !(cond < 1e6) {
            return Err(Error::IllConditioned { what: "A", cond });
        }
        condition = condition.max(cond);
        let r5 = ainv * x;
        norm = norm.max(power_norm(&r5, 200, 1e-10));
        for (i, &n) in ns.iter().enumerate() {
            for nn in [n, -n] {
                cols[i] = cols[i].max(r5.column(grid.idx(nn)).norm());
            }
        }
        out.push(LinearOp::new(r5));
    }
    let x: Vec<f64> = ns.iter().map(|&n| n.abs() as f64).collect();
    let slope = if cols.iter().all(|c| *c > 0.0) { loglog_slope(&x, &cols) } else { 0.0 };
    let w_size = w.iter().map(|f| f.sobolev_norm(2.0)).fold(0.0, f64::max);
    Ok((out, DefectReport { ns: ns.to_vec(), column_norms: cols, slope, condition, norm, w_size }))
}
