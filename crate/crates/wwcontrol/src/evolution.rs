//! Linear Cauchy solvers with midpoint-frozen exponential steps, and the
//! nonlinear water-wave stepper.
//!
//! Every linear equation is written `∂_t φ = -A(t) φ + F`. One step over
//! `[t_k, t_{k+1}]` uses `U_k = exp(-Δt A(t_{k+1/2}))`; a source that is constant
//! on the interval enters through `B_k = Δt φ₁(-Δt A(t_{k+1/2}))`, so the step is
//! exact for frozen coefficients.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm, expm_phi1, op_norm, CMat, C64, I};
use crate::paradiff::{paraop_matrix, CutoffParams, Symbol};
use crate::spectral::{Field, Grid, MultiplierKind};
use crate::waterwave::{Model, WaveState};

/// Which linear operator the coefficients describe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// `T_V ∂_x + i L^{1/2} T_c L^{1/2} + R`
    Paradifferential,
    /// `V ∂_x + i L^{1/2} c L^{1/2} + R`
    Classical,
    /// `W ∂_x + i L + R`
    Transport,
    /// `i L`
    Flat,
}

/// Time-sampled coefficients. An empty list means the neutral value
/// (`V = 0`, `c = 1`, `W = 0`, `R = 0`), a single entry is constant in time and
/// `K_t + 1` entries are node samples interpolated linearly.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub mode: Mode,
    pub v: Vec<Field>,
    pub c: Vec<Field>,
    pub w: Vec<Field>,
    pub r: Vec<CMat>,
    pub cut: CutoffParams,
}

fn interp<T: Clone>(
    samples: &[T],
    grid: &Grid,
    t: f64,
    lerp: impl Fn(&T, &T, f64) -> T,
) -> Option<T> {
    match samples.len() {
        0 => None,
        1 => Some(samples[0].clone()),
        n => {
            let s = (t / grid.dt()).clamp(0.0, (n - 1) as f64);
            let k = (s.floor() as usize).min(n - 2);
            let th = s - k as f64;
            if th == 0.0 {
                Some(samples[k].clone())
            } else {
                Some(lerp(&samples[k], &samples[k + 1], th))
            }
        }
    }
}

fn lerp_field(a: &Field, b: &Field, th: f64) -> Field {
    &a.scale(1.0 - th) + &b.scale(th)
}

fn lerp_mat(a: &CMat, b: &CMat, th: f64) -> CMat {
    a * C64::new(1.0 - th, 0.0) + b * C64::new(th, 0.0)
}

impl Coefficients {
    pub fn flat() -> Self {
        Self { mode: Mode::Flat, v: vec![], c: vec![], w: vec![], r: vec![], cut: CutoffParams::default() }
    }

    pub fn classical(v: Vec<Field>, c: Vec<Field>) -> Self {
        Self { mode: Mode::Classical, v, c, ..Self::flat() }
    }

    pub fn paradifferential(v: Vec<Field>, c: Vec<Field>) -> Self {
        Self { mode: Mode::Paradifferential, v, c, ..Self::flat() }
    }

    pub fn transport(w: Vec<Field>) -> Self {
        Self { mode: Mode::Transport, w, ..Self::flat() }
    }

    pub fn with_r(mut self, r: Vec<CMat>) -> Self {
        self.r = r;
        self
    }

    /// Whether every coefficient is constant in time.
    pub fn is_autonomous(&self) -> bool {
        self.v.len() <= 1 && self.c.len() <= 1 && self.w.len() <= 1 && self.r.len() <= 1
    }

    pub fn v_at(&self, grid: &Grid, t: f64) -> Option<Field> {
        interp(&self.v, grid, t, lerp_field)
    }

    pub fn c_at(&self, grid: &Grid, t: f64) -> Option<Field> {
        interp(&self.c, grid, t, lerp_field)
    }

    pub fn w_at(&self, grid: &Grid, t: f64) -> Option<Field> {
        interp(&self.w, grid, t, lerp_field)
    }

    pub fn r_at(&self, grid: &Grid, t: f64) -> Option<CMat> {
        interp(&self.r, grid, t, lerp_mat)
    }

    /// Checks sample counts and the lower bound `c >= 1/2`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let ok = |n: usize| n <= 1 || n == grid.kt + 1;
        if !(ok(self.v.len()) && ok(self.c.len()) && ok(self.w.len()) && ok(self.r.len())) {
            return Err(Error::Domain("coefficient samples must be constant or one per time node".into()));
        }
        for c in &self.c {
            grid.check(c)?;
            let min = grid.to_physical_real(c).into_iter().fold(f64::INFINITY, f64::min);
            if min < 0.5 {
                return Err(Error::Domain(format!("c must stay above 1/2, min = {min}")));
            }
        }
        Ok(())
    }
}

/// Dense generator `A(t)` with the convention `∂_t φ = -A(t) φ + F`.
pub fn generator(grid: &Grid, coeffs: &Coefficients, t: f64) -> CMat {
    let d = grid.dim();
    let dx = grid.multiplier_matrix(MultiplierKind::Dx);
    let lh = grid.multiplier_diag(MultiplierKind::LHalf);
    let mut a = CMat::zeros(d, d);
    match coeffs.mode {
        Mode::Flat => {
            a = grid.multiplier_matrix(MultiplierKind::L) * I;
        }
        Mode::Transport => {
            a = grid.multiplier_matrix(MultiplierKind::L) * I;
            if let Some(w) = coeffs.w_at(grid, t) {
                a += grid.mul_matrix_re(&w) * &dx;
            }
        }
        Mode::Classical | Mode::Paradifferential => {
            let para = coeffs.mode == Mode::Paradifferential;
            let op = |f: &Field| {
                if para {
                    paraop_matrix(grid, &Symbol::function_of_field(grid, f), &coeffs.cut)
                } else {
                    grid.mul_matrix_re(f)
                }
            };
            if let Some(v) = coeffs.v_at(grid, t) {
                a += op(&v) * &dx;
            }
            let mc = match coeffs.c_at(grid, t) {
                Some(c) => op(&c),
                None => CMat::identity(d, d),
            };
            let mut disp = CMat::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    disp[(i, j)] = I * lh[i] * mc[(i, j)] * lh[j];
                }
            }
            a += disp;
        }
    }
    if coeffs.mode != Mode::Flat {
        if let Some(r) = coeffs.r_at(grid, t) {
            a += r;
        }
    }
    a
}

/// Time-indexed fields on the uniform lattice `t_k = kT/K_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub values: Vec<Field>,
}

impl Trajectory {
    pub fn new(grid: &Grid, values: Vec<Field>) -> Self {
        let t = (0..values.len()).map(|k| grid.time(k)).collect();
        Self { t, values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::new(grid, vec![Field::zeros(grid.n); grid.kt + 1])
    }

    pub fn last(&self) -> &Field {
        self.values.last().expect("non-empty trajectory")
    }

    /// `sup_k ‖values[k]‖_{H^μ}`.
    pub fn sup_norm(&self, mu: f64) -> f64 {
        self.values.iter().map(|f| f.sobolev_norm(mu)).fold(0.0, f64::max)
    }

    pub fn diff_sup(&self, other: &Trajectory, mu: f64) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).sobolev_norm(mu))
            .fold(0.0, f64::max)
    }
}

/// Source term of a linear solve.
#[derive(Clone, Debug)]
pub enum Source {
    None,
    /// One value per time node; each interval uses the average of its end points.
    Nodes(Vec<Field>),
    /// One constant value per interval.
    Intervals(Vec<Field>),
}

impl Source {
    pub fn interval_values(&self, grid: &Grid) -> Result<Option<Vec<Field>>> {
        match self {
            Source::None => Ok(None),
            Source::Nodes(v) => {
                if v.len() != grid.kt + 1 {
                    return Err(Error::Length { expected: grid.kt + 1, got: v.len() });
                }
                Ok(Some((0..grid.kt).map(|k| lerp_field(&v[k], &v[k + 1], 0.5)).collect()))
            }
            Source::Intervals(v) => {
                if v.len() != grid.kt {
                    return Err(Error::Length { expected: grid.kt, got: v.len() });
                }
                Ok(Some(v.clone()))
            }
        }
    }
}

/// Cached one-step matrices for a fixed set of coefficients.
#[derive(Debug)]
pub struct Propagator {
    pub grid: Grid,
    /// `A(t_{k+1/2})`.
    pub gens: Vec<CMat>,
    /// `U_k = exp(-Δt A_k)`.
    pub steps: Vec<CMat>,
    /// `B_k = Δt φ₁(-Δt A_k)`.
    pub inputs: Vec<CMat>,
    inverses: OnceLock<Vec<CMat>>,
}

impl Clone for Propagator {
    fn clone(&self) -> Self {
        let inv = OnceLock::new();
        if let Some(v) = self.inverses.get() {
            let _ = inv.set(v.clone());
        }
        Self {
            grid: self.grid.clone(),
            gens: self.gens.clone(),
            steps: self.steps.clone(),
            inputs: self.inputs.clone(),
            inverses: inv,
        }
    }
}

impl Propagator {
    pub fn build(grid: &Grid, coeffs: &Coefficients) -> Result<Self> {
        coeffs.validate(grid)?;
        let gens: Vec<CMat> = if coeffs.is_autonomous() {
            vec![generator(grid, coeffs, 0.0); grid.kt]
        } else {
            (0..grid.kt)
                .map(|k| generator(grid, coeffs, (k as f64 + 0.5) * grid.dt()))
                .collect()
        };
        Ok(Self::from_generators(grid, gens))
    }

    /// Propagator for arbitrary midpoint generators (one per interval).
    pub fn from_generators(grid: &Grid, gens: Vec<CMat>) -> Self {
        let dt = grid.dt();
        let mut steps = Vec::with_capacity(gens.len());
        let mut inputs = Vec::with_capacity(gens.len());
        let mut cache: Option<(usize, CMat, CMat)> = None;
        for (k, a) in gens.iter().enumerate() {
            if let Some((j, u, b)) = &cache {
                if gens[*j] == *a {
                    steps.push(u.clone());
                    inputs.push(b.clone());
                    continue;
                }
            }
            let (u, p) = expm_phi1(&(a * C64::new(-dt, 0.0)));
            let b = p * C64::new(dt, 0.0);
            steps.push(u.clone());
            inputs.push(b.clone());
            cache = Some((k, u, b));
        }
        Self { grid: grid.clone(), gens, steps, inputs, inverses: OnceLock::new() }
    }

    /// Propagator from explicit step and input matrices.
    pub fn from_steps(grid: &Grid, gens: Vec<CMat>, steps: Vec<CMat>, inputs: Vec<CMat>) -> Self {
        Self { grid: grid.clone(), gens, steps, inputs, inverses: OnceLock::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `U_k^{-1} = exp(Δt A_k)`.
    pub fn inverses(&self) -> &Vec<CMat> {
        self.inverses.get_or_init(|| {
            let dt = self.grid.dt();
            let mut out: Vec<CMat> = Vec::with_capacity(self.gens.len());
            for (k, a) in self.gens.iter().enumerate() {
                if k > 0 && self.gens[k - 1] == *a {
                    let prev = out[k - 1].clone();
                    out.push(prev);
                } else {
                    out.push(expm(&(a * C64::new(dt, 0.0))));
                }
            }
            out
        })
    }

    /// Forward solve from `data` at `t = 0`.
    pub fn forward(&self, data: &Field, source: Option<&[Field]>) -> Vec<Field> {
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(data.clone());
        for k in 0..self.len() {
            let mut next = &self.steps[k] * &out[k];
            if let Some(f) = source {
                next += &(&self.inputs[k] * &f[k]);
            }
            out.push(next);
        }
        out
    }

    /// Backward solve from `data` at `t = T` with the same steps reversed.
    pub fn backward(&self, data: &Field, source: Option<&[Field]>) -> Vec<Field> {
        let inv = self.inverses();
        let n = self.len();
        let mut out = vec![Field::zeros(data.nmax()); n + 1];
        out[n] = data.clone();
        for k in (0..n).rev() {
            let mut rhs = out[k + 1].clone();
            if let Some(f) = source {
                rhs -= &(&self.inputs[k] * &f[k]);
            }
            out[k] = &inv[k] * &rhs;
        }
        out
    }

    /// Discrete adjoint chain `φ_K = data`, `φ_k = U_kᴴ φ_{k+1}`.
    pub fn adjoint(&self, data: &Field) -> Vec<Field> {
        let n = self.len();
        let mut out = vec![Field::zeros(data.nmax()); n + 1];
        out[n] = data.clone();
        for k in (0..n).rev() {
            out[k] = Field::from_vec(self.steps[k].adjoint() * &out[k + 1].coeffs);
        }
        out
    }
}

/// Where the data of a linear solve is prescribed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Data at `t = 0`.
    Forward,
    /// Data at `t = T`.
    Backward,
}

/// Solves `∂_t φ + A(t) φ = F` with data at `0` or `T`.
pub fn solve(
    grid: &Grid,
    coeffs: &Coefficients,
    source: &Source,
    data: &Field,
    direction: Direction,
) -> Result<Trajectory> {
    grid.check(data)?;
    let prop = Propagator::build(grid, coeffs)?;
    let src = source.interval_values(grid)?;
    let vals = match direction {
        Direction::Forward => prop.forward(data, src.as_deref()),
        Direction::Backward => prop.backward(data, src.as_deref()),
    };
    Ok(Trajectory::new(grid, vals))
}

/// Coefficients of `𝒬 = ∂_t + W∂_x + iL + 𝓡` with `𝓡 = -R* + ∂_x W`.
pub fn adjoint_coeffs(grid: &Grid, coeffs: &Coefficients) -> Result<Coefficients> {
    if coeffs.mode != Mode::Transport {
        return Err(Error::Domain("adjoint coefficients need transport mode".into()));
    }
    let nt = coeffs.w.len().max(coeffs.r.len());
    let count = if nt <= 1 { 1 } else { grid.kt + 1 };
    let mut r = Vec::with_capacity(count);
    for k in 0..count {
        let t = grid.time(k);
        let mut m = match coeffs.r_at(grid, t) {
            Some(rr) => -rr.adjoint(),
            None => CMat::zeros(grid.dim(), grid.dim()),
        };
        if let Some(w) = coeffs.w_at(grid, t) {
            m += grid.mul_matrix_re(&grid.dx(&w));
        }
        r.push(m);
    }
    Ok(Coefficients { r, ..coeffs.clone() })
}

/// Growth measurements of a solved trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub mu: Vec<f64>,
    /// Measured exponent `max_k ln(‖φ(t_k)‖_{H^μ}/‖φ(0)‖_{H^μ}) / t_k`.
    pub growth: Vec<f64>,
    /// `sup_t (‖∂_x V‖_∞ + ‖R‖_{L²})`, scaled by `1+μ` for `μ > 0`.
    pub bound: Vec<f64>,
    pub violation: Vec<bool>,
    /// Relative spread of the `L²` norm over the trajectory.
    pub l2_drift: f64,
}

pub fn energy_report(grid: &Grid, traj: &Trajectory, coeffs: &Coefficients) -> EnergyReport {
    let mus = vec![0.0, 1.0, 1.5];
    let mut m_bound: f64 = 0.0;
    for k in 0..traj.values.len() {
        let t = grid.time(k);
        let mut m = 0.0;
        let vf = match coeffs.mode {
            Mode::Transport => coeffs.w_at(grid, t),
            Mode::Flat => None,
            _ => coeffs.v_at(grid, t),
        };
        if let Some(v) = vf {
            m += grid.to_physical_real(&grid.dx(&v)).iter().fold(0.0, |a: f64, x| a.max(x.abs()));
        }
        if coeffs.mode != Mode::Flat {
            if let Some(r) = coeffs.r_at(grid, t) {
                m += op_norm(&r);
            }
        }
        m_bound = m_bound.max(m);
    }
    let mut growth = Vec::new();
    let mut bound = Vec::new();
    let mut violation = Vec::new();
    for &mu in &mus {
        let n0 = traj.values[0].sobolev_norm(mu);
        let mut g: f64 = f64::NEG_INFINITY;
        if n0 > 0.0 {
            for (k, f) in traj.values.iter().enumerate().skip(1) {
                let t = traj.t[k];
                g = g.max((f.sobolev_norm(mu) / n0).ln() / t);
            }
        }
        let b = if mu == 0.0 { m_bound } else { (1.0 + mu) * m_bound };
        growth.push(g);
        bound.push(b);
        violation.push(g > 1.1 * b + 1e-9);
    }
    let l2: Vec<f64> = traj.values.iter().map(|f| f.l2_norm()).collect();
    let mx = l2.iter().cloned().fold(0.0, f64::max);
    let mn = l2.iter().cloned().fold(f64::INFINITY, f64::min);
    let l2_drift = if mx > 0.0 { (mx - mn) / mx } else { 0.0 };
    EnergyReport { mu: mus, growth, bound, violation, l2_drift }
}

/// Checks `|Im û(0)(t_k) - Im û(0)(0)| <= 1e-10` along a trajectory.
///
/// Returns `None` (check skipped) when the source is not real-valued or the
/// coefficients are not paradifferential.
pub fn mean_invariant_check(coeffs: &Coefficients, traj: &Trajectory, source: &[Field]) -> Option<bool> {
    if coeffs.mode != Mode::Paradifferential {
        return None;
    }
    if source.iter().any(|f| !f.is_real(1e-12 * (1.0 + f.l2_norm()))) {
        return None;
    }
    Some(mean_invariant_drift(traj) <= 1e-10)
}

/// `max_k |Im û(0)(t_k) - Im û(0)(0)|`.
pub fn mean_invariant_drift(traj: &Trajectory) -> f64 {
    let m0 = traj.values[0].mean().im;
    traj.values.iter().map(|f| (f.mean().im - m0).abs()).fold(0.0, f64::max)
}

/// Number of RK4 substeps per interval so that `Δt ≤ C_cfl/(1 + N^{3/2})`.
pub fn cfl_substeps(grid: &Grid, c_cfl: f64) -> usize {
    let dt_max = c_cfl / (1.0 + (grid.n as f64).powf(1.5));
    (grid.dt() / dt_max).ceil().max(1.0) as usize
}

/// One interval of the nonlinear system by `substeps` RK4 steps with constant pressure.
pub fn nonlinear_step(model: &Model, state: &WaveState, p: &Field, dt: f64, substeps: usize) -> Result<WaveState> {
    let h = dt / substeps as f64;
    let mut s = state.clone();
    for _ in 0..substeps {
        let k1 = model.rhs_full(&s, p)?;
        let k2 = model.rhs_full(&s.axpy(0.5 * h, &k1), p)?;
        let k3 = model.rhs_full(&s.axpy(0.5 * h, &k2), p)?;
        let k4 = model.rhs_full(&s.axpy(h, &k3), p)?;
        s = s
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        s.eta.set(0, crate::linalg::ZERO);
    }
    Ok(s)
}

/// Nonlinear evolution with a pressure that is constant on each time interval.
pub fn solve_nonlinear(
    model: &Model,
    state0: &WaveState,
    p_ext: &[Field],
    c_cfl: f64,
) -> Result<Vec<WaveState>> {
    let grid = &model.grid;
    if p_ext.len() != grid.kt {
        return Err(Error::Length { expected: grid.kt, got: p_ext.len() });
    }
    let sub = cfl_substeps(grid, c_cfl);
    let pmax = p_ext.iter().map(|p| p.l2_norm()).fold(0.0, f64::max);
    let limit = 10.0 * (state0.norm(0.0) + grid.t_end * pmax);
    let mut out = Vec::with_capacity(grid.kt + 1);
    out.push(state0.clone());
    for k in 0..grid.kt {
        let next = nonlinear_step(model, &out[k], &p_ext[k], grid.dt(), sub)?;
        let nrm = next.norm(0.0);
        if nrm > limit {
            return Err(Error::BlowUp { t: grid.time(k + 1), norm: nrm, limit });
        }
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::waterwave::tests::random_real;
    use rand::SeedableRng;

    fn grid(n: usize, kt: usize) -> Grid {
        Grid::standard(n).with_time(1.0, kt)
    }

    #[test]
    fn flat_generator_and_classical_reduction() {
        let g = grid(8, 16);
        let a = generator(&g, &Coefficients::flat(), 0.3);
        assert_eq!(a, g.multiplier_matrix(MultiplierKind::L) * I);
        let one = g.constant(ONE);
        let b = generator(&g, &Coefficients::classical(vec![Field::zeros(8)], vec![one]), 0.3);
        assert!((a - b).norm() < 1e-13);
    }

    #[test]
    fn paradifferential_close_to_classical() {
        let g = grid(16, 8);
        let mut ratios = Vec::new();
        for amp in [0.02, 0.04, 0.08] {
            let v = g.from_fn(|x| amp * x.sin());
            let c = g.from_fn(|x| 1.0 + amp * x.cos());
            let size = v.sobolev_norm(3.0) + (&c - &g.constant(ONE)).sobolev_norm(3.0);
            let ap = generator(&g, &Coefficients::paradifferential(vec![v.clone()], vec![c.clone()]), 0.0);
            let ac = generator(&g, &Coefficients::classical(vec![v], vec![c]), 0.0);
            ratios.push(op_norm(&(ap - ac)) / size);
        }
        assert!(ratios.iter().all(|r| *r < 2.0 * ratios[0] + 1e-12), "{ratios:?}");
    }

    #[test]
    fn flat_single_mode_exact() {
        let g = grid(8, 32);
        let data = g.unit(1, ONE);
        let tr = solve(&g, &Coefficients::flat(), &Source::None, &data, Direction::Forward).unwrap();
        let l1 = (2.0 * 1f64.tanh()).sqrt();
        assert!((l1 - 1.2341752).abs() < 1e-7);
        for (k, f) in tr.values.iter().enumerate() {
            let t = g.time(k);
            let exact = C64::new(0.0, -l1 * t).exp();
            assert!((f.get(1) - exact).norm() < 1e-13);
        }
        let z = solve(&g, &Coefficients::flat(), &Source::None, &Field::zeros(8), Direction::Forward).unwrap();
        assert_eq!(z.sup_norm(0.0), 0.0);
    }

    fn sample_coeffs(g: &Grid, seed: u64) -> Coefficients {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Field> = (0..=g.kt)
            .map(|k| g.from_fn(|x| 0.1 * (x + g.time(k)).sin()))
            .collect();
        let c: Vec<Field> = (0..=g.kt)
            .map(|k| g.from_fn(|x| 1.0 + 0.05 * (x - 2.0 * g.time(k)).cos()))
            .collect();
        let r0 = random_real(&mut rng, g.n, 0.05, 0.0, false);
        Coefficients::paradifferential(v, c).with_r(vec![g.mul_matrix(&r0)])
    }

    #[test]
    fn forward_backward_round_trip() {
        let g = grid(16, 64);
        let co = sample_coeffs(&g, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let data = random_real(&mut rng, 16, 1.0, 1.0, false);
        let src: Vec<Field> = (0..g.kt).map(|_| random_real(&mut rng, 16, 0.3, 1.0, false)).collect();
        let fw = solve(&g, &co, &Source::Intervals(src.clone()), &data, Direction::Forward).unwrap();
        let bw = solve(&g, &co, &Source::Intervals(src), fw.last(), Direction::Backward).unwrap();
        assert!((&bw.values[0] - &data).l2_norm() < 1e-10 * data.l2_norm());
    }

    #[test]
    fn superposition() {
        let g = grid(12, 32);
        let co = sample_coeffs(&g, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let d1 = random_real(&mut rng, 12, 1.0, 1.0, false);
        let d2 = random_real(&mut rng, 12, 1.0, 1.0, false);
        let s1: Vec<Field> = (0..=g.kt).map(|_| random_real(&mut rng, 12, 1.0, 1.0, false)).collect();
        let s2: Vec<Field> = (0..=g.kt).map(|_| random_real(&mut rng, 12, 1.0, 1.0, false)).collect();
        let sum: Vec<Field> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let a = solve(&g, &co, &Source::Nodes(s1), &d1, Direction::Forward).unwrap();
        let b = solve(&g, &co, &Source::Nodes(s2), &d2, Direction::Forward).unwrap();
        let c = solve(&g, &co, &Source::Nodes(sum), &(&d1 + &d2), Direction::Forward).unwrap();
        for k in 0..=g.kt {
            assert!((&(&a.values[k] + &b.values[k]) - &c.values[k]).l2_norm() < 1e-11);
        }
    }

    #[test]
    fn unitary_steps_for_skew_generators() {
        let g = grid(16, 8);
        let c = g.from_fn(|x| 1.0 + 0.1 * x.cos());
        for co in [Coefficients::flat(), Coefficients::classical(vec![], vec![c])] {
            let p = Propagator::build(&g, &co).unwrap();
            let u = &p.steps[0];
            assert!((u.adjoint() * u - CMat::identity(g.dim(), g.dim())).norm() < 1e-12);
        }
    }

    #[test]
    fn second_order_in_time() {
        let co_for = |g: &Grid| sample_coeffs(g, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let data = random_real(&mut rng, 8, 1.0, 2.0, false);
        let mut finals = Vec::new();
        for kt in [16, 32, 64, 128] {
            let g = grid(8, kt);
            let tr = solve(&g, &co_for(&g), &Source::None, &data, Direction::Forward).unwrap();
            finals.push(tr.last().clone());
        }
        let d1 = (&finals[1] - &finals[0]).l2_norm();
        let d2 = (&finals[2] - &finals[1]).l2_norm();
        let d3 = (&finals[3] - &finals[2]).l2_norm();
        assert!(d3 < d2 / 3.0 && d2 < d1 / 3.0, "{d1} {d2} {d3}");
    }

    #[test]
    fn adjoint_coefficients_formula() {
        let g = grid(12, 8);
        let co = Coefficients::transport(vec![]);
        let q = adjoint_coeffs(&g, &co).unwrap();
        assert!(q.r[0].norm() == 0.0);
        let w = g.from_fn(|x| 0.1 * x.sin());
        let q = adjoint_coeffs(&g, &Coefficients::transport(vec![w])).unwrap();
        let expect = g.mul_matrix_re(&g.from_fn(|x| 0.1 * x.cos()));
        assert!((&q.r[0] - expect).norm() < 1e-14);
        assert!(adjoint_coeffs(&g, &Coefficients::flat()).is_err());
    }

    #[test]
    fn integration_by_parts_identity() {
        let g = grid(12, 64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let w: Vec<Field> = (0..=g.kt).map(|k| g.from_fn(|x| 0.1 * (x - g.time(k)).sin())).collect();
        let r = g.mul_matrix(&random_real(&mut rng, 12, 0.1, 0.0, false));
        let q = Coefficients::transport(w).with_r(vec![r]);
        let qa = adjoint_coeffs(&g, &q).unwrap();
        let phi0 = random_real(&mut rng, 12, 1.0, 1.0, false);
        let psi0 = random_real(&mut rng, 12, 1.0, 1.0, false);
        let a = solve(&g, &q, &Source::None, &phi0, Direction::Forward).unwrap();
        let b = solve(&g, &qa, &Source::None, &psi0, Direction::Forward).unwrap();
        // With Qφ = 0 and 𝒬ψ = 0 the pairing ⟨φ, ψ⟩ is conserved.
        let p0 = phi0.coeffs.dotc(&psi0.coeffs);
        for k in 0..=g.kt {
            let pk = b.values[k].coeffs.dotc(&a.values[k].coeffs);
            assert!((pk - p0).norm() < 1e-9, "{k}: {}", (pk - p0).norm());
        }
    }

    #[test]
    fn energy_examples() {
        let g = grid(16, 64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let data = random_real(&mut rng, 16, 1.0, 1.0, false);
        let tr = solve(&g, &Coefficients::flat(), &Source::None, &data, Direction::Forward).unwrap();
        let rep = energy_report(&g, &tr, &Coefficients::flat());
        assert!(rep.l2_drift < 1e-12);
        let c = g.from_fn(|x| 1.0 + 0.1 * x.cos());
        let co = Coefficients::classical(vec![], vec![c]);
        let tr = solve(&g, &co, &Source::None, &data, Direction::Forward).unwrap();
        assert!(energy_report(&g, &tr, &co).l2_drift < 1e-10);
        let v = g.from_fn(|x| 0.1 * x.sin());
        let co = Coefficients::classical(vec![v], vec![]);
        let tr = solve(&g, &co, &Source::None, &data, Direction::Forward).unwrap();
        let rep = energy_report(&g, &tr, &co);
        assert!(rep.growth[0] <= 0.1 + 1e-6, "{:?}", rep.growth);
        assert!(!rep.violation[0]);
    }

    #[test]
    fn mean_invariant_on_paradifferential_solves() {
        let g = grid(16, 64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let v: Vec<Field> = (0..=g.kt).map(|k| g.from_fn(|x| 0.05 * (x + g.time(k)).sin())).collect();
        let c: Vec<Field> = (0..=g.kt).map(|_| g.from_fn(|x| 1.0 + 0.05 * x.cos())).collect();
        let co = Coefficients::paradifferential(v, c);
        let mut u0 = random_real(&mut rng, 16, 1.0, 1.0, false);
        u0 = &u0 + &random_real(&mut rng, 16, 1.0, 1.0, true).scale_c(I);
        let zero: Vec<Field> = vec![Field::zeros(16); g.kt + 1];
        let tr = solve(&g, &co, &Source::None, &u0, Direction::Forward).unwrap();
        assert_eq!(mean_invariant_check(&co, &tr, &zero), Some(true));
        let src: Vec<Field> = (0..=g.kt).map(|_| random_real(&mut rng, 16, 1.0, 1.0, false)).collect();
        let tr = solve(&g, &co, &Source::Nodes(src.clone()), &u0, Direction::Forward).unwrap();
        assert_eq!(mean_invariant_check(&co, &tr, &src), Some(true));
        let csrc: Vec<Field> = src.iter().map(|f| f.scale_c(I)).collect();
        assert_eq!(mean_invariant_check(&co, &tr, &csrc), None);
    }

    #[test]
    fn nonlinear_zero_and_mean() {
        let g = grid(8, 8);
        let m = Model::new(g.clone());
        let p = vec![Field::zeros(8); g.kt];
        let out = solve_nonlinear(&m, &WaveState::zeros(8), &p, 0.5).unwrap();
        assert!(out.iter().all(|s| s.norm(0.0) == 0.0));
        let s0 = WaveState { eta: g.from_fn(|x| 1e-3 * x.cos()), psi: g.from_fn(|x| 1e-3 * (2.0 * x).sin()) };
        let out = solve_nonlinear(&m, &s0, &p, 0.5).unwrap();
        assert!(out.iter().all(|s| s.eta.mean().norm() < 1e-12));
    }

    #[test]
    fn nonlinear_matches_linear_to_second_order() {
        let g = grid(8, 32);
        let m = Model::new(g.clone());
        let p = vec![Field::zeros(8); g.kt];
        let l1 = g.ell(1.0);
        let lam1 = g.lambda(1.0);
        let mut errs = Vec::new();
        for eps in [1e-3, 5e-4] {
            let s0 = WaveState { eta: g.from_fn(|x| eps * x.cos()), psi: Field::zeros(8) };
            let out = solve_nonlinear(&m, &s0, &p, 0.5).unwrap();
            let t = g.t_end;
            // linear solution: η = ε cos(ℓt) cos x, ψ = -ε (ℓ/λ) sin(ℓt) cos x
            let eta = g.from_fn(|x| eps * (l1 * t).cos() * x.cos());
            let psi = g.from_fn(|x| -eps * l1 / lam1 * (l1 * t).sin() * x.cos());
            let e = (&out[g.kt].eta - &eta).l2_norm() + (&out[g.kt].psi - &psi).l2_norm();
            errs.push(e);
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "{errs:?}");
    }

    #[test]
    fn free_nonlinear_flow_conserves_energy() {
        let g = grid(8, 16);
        let model = Model::new(g.clone());
        let state = WaveState { eta: g.from_fn(|x| 2e-3 * x.cos()), psi: g.from_fn(|x| 1e-3 * (2.0 * x).sin()) };
        let states = solve_nonlinear(&model, &state, &vec![Field::zeros(8); 16], 0.1).unwrap();
        let e0 = model.energy(&state).unwrap();
        let drift = states.iter().map(|s| (model.energy(s).unwrap() - e0).abs()).fold(0.0, f64::max);
        assert!(e0 > 0.0 && drift < 1e-6 * e0, "{drift} {e0}");
    }
}
