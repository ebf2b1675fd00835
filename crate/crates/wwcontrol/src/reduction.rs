//! Regularizing operator `Λ_{h,s} = I + h^s T_{c^r} L^r` (`r = 2s/3`), its
//! commutators, the conjugated operator `Λ P Λ^{-1}` and the `𝒦` correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{generator, Coefficients, Mode};
use crate::linalg::{loglog_slope, op_norm, op_norm_real, weighted_norm, CMat, RMat, RVec, C64, ONE};
use crate::paradiff::{paraop_matrix, CutoffParams, Symbol};
use crate::spectral::{Field, Grid, MultiplierKind};

/// Parameters of `Λ_{h,s}`; an empty `c` means `c ≡ 1`.
#[derive(Clone, Debug)]
pub struct LambdaParams {
    pub h: f64,
    pub s: f64,
    pub c: Vec<Field>,
}

impl LambdaParams {
    pub fn new(h: f64, s: f64, c: Vec<Field>) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::Domain(format!("h = {h} must lie in (0, 1]")));
        }
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("s = {s} must be nonnegative")));
        }
        Ok(Self { h, s, c })
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    fn c_at(&self, grid: &Grid, t: f64) -> Option<Field> {
        let co = Coefficients { c: self.c.clone(), ..Coefficients::flat() };
        co.c_at(grid, t)
    }
}

/// `Λ`, `Λ^{-1}` at one time.
#[derive(Clone, Debug)]
pub struct Lambda {
    pub op: CMat,
    pub inv: CMat,
    /// `‖B‖_{L(L²)}` of the factorization `Λ = (I+B)(I+h^s L^r)`.
    pub b_norm: f64,
    /// `‖Λ Λ^{-1} - I‖_{L(L²)}`.
    pub roundtrip: f64,
    pub neumann_terms: usize,
}

/// Assembles `Λ_{h,s}` for one profile `c` (or `c ≡ 1`) and inverts it through
/// `(I+h^s L^r)^{-1}(I+B)^{-1}` with a Neumann series for `(I+B)^{-1}`.
pub fn lambda_for(grid: &Grid, h: f64, s: f64, c: Option<&Field>, cut: &CutoffParams) -> Result<Lambda> {
    let d = grid.dim();
    let r = 2.0 * s / 3.0;
    let hs = h.powf(s);
    let lr = grid.multiplier_diag(MultiplierKind::LPow(r));
    let lr = if s == 0.0 { lr.map(|_| ONE) } else { lr };
    let den: Vec<f64> = lr.iter().map(|z| 1.0 + hs * z.re).collect();
    let tc1 = match c {
        None => CMat::zeros(d, d),
        Some(c) => {
            let cs: Vec<C64> = grid
                .to_physical_real(c)
                .iter()
                .map(|v| C64::new(v.powf(r) - 1.0, 0.0))
                .collect();
            paraop_matrix(grid, &Symbol::function(grid, &cs), cut)
        }
    };
    let mut b = CMat::zeros(d, d);
    let mut op = CMat::identity(d, d);
    for j in 0..d {
        let col = lr[j] * hs;
        for i in 0..d {
            b[(i, j)] = tc1[(i, j)] * col / den[j];
            op[(i, j)] += tc1[(i, j)] * col;
        }
        op[(j, j)] += col;
    }
    let b_norm = op_norm(&b);
    if b_norm >= 0.5 {
        return Err(Error::Contraction { what: "Λ = (I+B)(I+h^s L^r)", factor: b_norm });
    }
    let mut sum = CMat::identity(d, d);
    let mut term = CMat::identity(d, d);
    let mut terms = 0;
    while term.norm() > 1e-13 && terms < 200 {
        term = -(&b * &term);
        sum += &term;
        terms += 1;
    }
    let mut inv = sum;
    for i in 0..d {
        let f = 1.0 / den[i];
        for j in 0..d {
            inv[(i, j)] *= f;
        }
    }
    let roundtrip = op_norm(&(&op * &inv - CMat::identity(d, d)));
    Ok(Lambda { op, inv, b_norm, roundtrip, neumann_terms: terms })
}

/// `Λ_{h,s}` at time `t`.
pub fn lambda_at(grid: &Grid, params: &LambdaParams, t: f64, cut: &CutoffParams) -> Result<Lambda> {
    let c = params.c_at(grid, t);
    lambda_for(grid, params.h, params.s, c.as_ref(), cut)
}

/// `Λ_{h,s}` at `t = 0`.
pub fn lambda_op(grid: &Grid, params: &LambdaParams, cut: &CutoffParams) -> Result<Lambda> {
    lambda_at(grid, params, 0.0, cut)
}

/// `Λ_{h,s}` at every time node.
pub fn lambda_nodes(grid: &Grid, params: &LambdaParams, cut: &CutoffParams) -> Result<Vec<Lambda>> {
    if params.c.len() <= 1 {
        let l = lambda_at(grid, params, 0.0, cut)?;
        return Ok(vec![l; grid.kt + 1]);
    }
    (0..=grid.kt).map(|k| lambda_at(grid, params, grid.time(k), cut)).collect()
}

/// `‖h^{s'} Λ^{-1}‖_{L² → H^{s'}}` for `s' ∈ {0, s}`.
pub fn inverse_bounds(grid: &Grid, lam: &Lambda, h: f64, s: f64) -> [f64; 2] {
    let ones = RVec::from_element(grid.dim(), 1.0);
    let mut out = [0.0; 2];
    for (i, sp) in [0.0, s].into_iter().enumerate() {
        let w = grid.sobolev_weights(sp);
        out[i] = h.powf(sp) * weighted_norm(&lam.inv, &w, &ones);
    }
    out
}

/// Measured commutator norms over an `h` sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub hs: Vec<f64>,
    /// `‖[Λ, T_V ∂_x] Λ^{-1}‖`.
    pub transport: Vec<f64>,
    /// `‖[Λ, χ_ω] Λ^{-1}‖`.
    pub cutoff: Vec<f64>,
    /// `‖[Λ, L^{1/2} T_c L^{1/2}] Λ^{-1}‖`.
    pub dispersion: Vec<f64>,
    pub cutoff_slope: f64,
    pub transport_variation: f64,
    pub dispersion_variation: f64,
    pub pass: bool,
}

fn variation(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(0.0, f64::max);
    let mn = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if mx == 0.0 {
        0.0
    } else {
        (mx - mn) / mx
    }
}

fn commutator_norm(lam: &Lambda, x: &CMat) -> f64 {
    op_norm(&((&lam.op * x - x * &lam.op) * &lam.inv))
}

/// Commutator norms for `h ∈ {h₀, h₀/2, h₀/4}`.
pub fn commutator_report(
    grid: &Grid,
    s: f64,
    h0: f64,
    v: &Field,
    chi: &Field,
    c: Option<&Field>,
    cut: &CutoffParams,
) -> Result<CommutatorReport> {
    let dx = grid.multiplier_matrix(MultiplierKind::Dx);
    let tv = paraop_matrix(grid, &Symbol::function_of_field(grid, v), cut) * &dx;
    let xc = grid.mul_matrix_re(chi);
    let lh = grid.multiplier_matrix(MultiplierKind::LHalf);
    let tc = match c {
        Some(c) => paraop_matrix(grid, &Symbol::function_of_field(grid, c), cut),
        None => CMat::identity(grid.dim(), grid.dim()),
    };
    let disp = &lh * tc * &lh;
    let hs = vec![h0, h0 / 2.0, h0 / 4.0];
    let mut transport = Vec::new();
    let mut cutoff = Vec::new();
    let mut dispersion = Vec::new();
    for &h in &hs {
        let lam = lambda_for(grid, h, s, c, cut)?;
        transport.push(commutator_norm(&lam, &tv));
        cutoff.push(commutator_norm(&lam, &xc));
        dispersion.push(commutator_norm(&lam, &disp));
    }
    let cutoff_slope = if cutoff.iter().all(|v| *v > 0.0) { loglog_slope(&hs, &cutoff) } else { 0.0 };
    let transport_variation = variation(&transport);
    let dispersion_variation = variation(&dispersion);
    let slope_ok = cutoff.iter().all(|v| *v == 0.0) || (0.8..=1.2).contains(&cutoff_slope);
    let pass = slope_ok && transport_variation < 0.2 && dispersion_variation < 0.2;
    Ok(CommutatorReport {
        hs,
        transport,
        cutoff,
        dispersion,
        cutoff_slope,
        transport_variation,
        dispersion_variation,
        pass,
    })
}

/// Result of conjugating a paradifferential operator by `Λ_{h,s}`.
#[derive(Clone, Debug)]
pub struct Conjugated {
    /// Classical coefficients `(V, c)` with `R₂` sampled at the nodes.
    pub coeffs: Coefficients,
    pub r2_norm: Vec<f64>,
    /// `‖V‖_{H^{s₀}} + ‖c-1‖_{H^{s₀}} + ‖∂_t c‖_{H¹} + h^{-s}‖R‖_{L(H^s)}` per node.
    pub rhs: Vec<f64>,
    /// `max_k ‖R₂(t_k)‖ / rhs_k`.
    pub fitted_k: f64,
}

/// Node samples that can be combined linearly.
pub trait NodeSample: Sized {
    fn combine(terms: &[(&Self, f64)]) -> Self;
}

impl NodeSample for Field {
    fn combine(terms: &[(&Self, f64)]) -> Self {
        let mut out = terms[0].0.scale(terms[0].1);
        for (f, w) in &terms[1..] {
            out += &f.scale(*w);
        }
        out
    }
}

impl NodeSample for CMat {
    fn combine(terms: &[(&Self, f64)]) -> Self {
        let mut out = terms[0].0 * C64::new(terms[0].1, 0.0);
        for (f, w) in &terms[1..] {
            out += *f * C64::new(*w, 0.0);
        }
        out
    }
}

/// Time derivative of node samples by centered differences (second order one-sided at the ends).
pub fn node_derivative<T: NodeSample>(samples: &[T], dt: f64) -> Vec<T> {
    let n = samples.len();
    assert!(n >= 3, "need at least three nodes");
    let h = 0.5 / dt;
    (0..n)
        .map(|k| {
            if k == 0 {
                T::combine(&[(&samples[0], -3.0 * h), (&samples[1], 4.0 * h), (&samples[2], -h)])
            } else if k == n - 1 {
                T::combine(&[(&samples[n - 1], 3.0 * h), (&samples[n - 2], -4.0 * h), (&samples[n - 3], h)])
            } else {
                T::combine(&[(&samples[k + 1], h), (&samples[k - 1], -h)])
            }
        })
        .collect()
}

/// `P̃_h = Λ P Λ^{-1} = ∂_t + V∂_x + iL^{1/2}(cL^{1/2}·) + R₂` with `R₂` from exact matrix algebra.
pub fn conjugate_p(grid: &Grid, coeffs: &Coefficients, params: &LambdaParams, cut: &CutoffParams) -> Result<Conjugated> {
    if coeffs.mode != Mode::Paradifferential {
        return Err(Error::Domain("conjugation needs paradifferential coefficients".into()));
    }
    let lams = lambda_nodes(grid, params, cut)?;
    let dt = grid.dt();
    let ops: Vec<CMat> = lams.iter().map(|l| l.op.clone()).collect();
    let dlam = if params.c.len() <= 1 {
        vec![CMat::zeros(grid.dim(), grid.dim()); grid.kt + 1]
    } else {
        node_derivative(&ops, dt)
    };
    let classical = Coefficients { mode: Mode::Classical, r: vec![], ..coeffs.clone() };
    let s0 = 2.5;
    let dc: Vec<Field> = if coeffs.c.len() > 1 { node_derivative(&coeffs.c, dt) } else { vec![] };
    let ws = grid.sobolev_weights(params.s);
    let mut r2 = Vec::with_capacity(grid.kt + 1);
    let mut r2_norm = Vec::new();
    let mut rhs = Vec::new();
    let nodes: Vec<usize> = if coeffs.is_autonomous() && params.c.len() <= 1 { vec![0] } else { (0..=grid.kt).collect() };
    for &k in &nodes {
        let t = grid.time(k);
        let a = generator(grid, coeffs, t);
        let at = &lams[k].op * a * &lams[k].inv - &dlam[k] * &lams[k].inv;
        let acl = generator(grid, &classical, t);
        let r = at - acl;
        let nr = op_norm(&r);
        let mut b = 0.0;
        if let Some(v) = coeffs.v_at(grid, t) {
            b += v.sobolev_norm(s0);
        }
        if let Some(c) = coeffs.c_at(grid, t) {
            b += (&c - &grid.constant(ONE)).sobolev_norm(s0);
        }
        if !dc.is_empty() {
            b += dc[k].sobolev_norm(1.0);
        }
        if let Some(rr) = coeffs.r_at(grid, t) {
            b += params.h.powf(-params.s) * weighted_norm(&rr, &ws, &ws);
        }
        r2.push(r);
        r2_norm.push(nr);
        rhs.push(b);
    }
    let fitted_k = r2_norm
        .iter()
        .zip(&rhs)
        .map(|(n, b)| if *b > 0.0 { n / b } else if *n > 1e-12 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(Conjugated { coeffs: classical.with_r(r2), r2_norm, rhs, fitted_k })
}

/// Dense real matrix of `𝒦` together with its `L²` operator norm.
#[derive(Clone, Debug)]
pub struct KOperator {
    pub mat: RMat,
    pub norm: f64,
}

impl KOperator {
    pub fn new(mat: RMat) -> Self {
        let norm = op_norm_real(&mat);
        Self { mat, norm }
    }

    /// Checks `‖𝒦‖ < 1/2`.
    pub fn check(&self) -> Result<()> {
        if self.norm >= 0.5 {
            return Err(Error::Contraction { what: "𝒦", factor: self.norm });
        }
        Ok(())
    }

    /// Solves `(I+𝒦) y = z` by the fixed point `y ← z - 𝒦 y` to relative `1e-11`.
    ///
    /// Returns the solution and the successive contraction ratios.
    pub fn solve(&self, z: &RVec) -> Result<(RVec, Vec<f64>)> {
        self.check()?;
        let scale = z.norm();
        if scale == 0.0 {
            return Ok((z.clone(), vec![]));
        }
        let mut y = z.clone();
        let mut ratios = Vec::new();
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            let next = z - &self.mat * &y;
            let change = (&next - &y).norm();
            y = next;
            if last.is_finite() && last > 0.0 {
                ratios.push(change / last);
            }
            last = change;
            if change <= 1e-11 * scale {
                return Ok((y, ratios));
            }
        }
        Err(Error::NoConvergence { what: "(I+𝒦)y = z", iterations: 500, last })
    }
}
