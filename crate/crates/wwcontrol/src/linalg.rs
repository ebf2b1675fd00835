//! Dense linear algebra helpers on top of nalgebra.
//!
//! Complex matrices act on coefficient vectors. Maps that are only ℝ-linear
//! (anything involving `Re`) are handled in the real representation
//! `z ↦ [Re z; Im z]`, where the real inner product `Re⟨a,b⟩` is the Euclidean one.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<C64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

/// `(e^X, φ₁(X))` with `φ₁(X) = Σ X^k/(k+1)!`, read off one exponential of the
/// block matrix `[[X, I], [0, 0]]`.
pub fn expm_phi1(x: &CMat) -> (CMat, CMat) {
    let d = x.nrows();
    let mut big = CMat::zeros(2 * d, 2 * d);
    big.view_mut((0, 0), (d, d)).copy_from(x);
    for i in 0..d {
        big[(i, d + i)] = ONE;
    }
    let e = big.exp();
    (
        e.view((0, 0), (d, d)).into_owned(),
        e.view((0, d), (d, d)).into_owned(),
    )
}

/// Largest singular value (spectral norm).
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Largest singular value of a real matrix.
pub fn op_norm_real(a: &RMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Smallest and largest singular values.
pub fn singular_range(a: &CMat) -> (f64, f64) {
    let s = a.clone().singular_values();
    let mn = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let mx = s.iter().cloned().fold(0.0, f64::max);
    (mn, mx)
}

/// Operator norm estimate by power iteration on `AᴴA`.
///
/// At most `max_iter` steps; stops once the relative change drops below `tol`.
/// The start vector is deterministic.
pub fn power_norm(a: &CMat, max_iter: usize, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = CVec::from_fn(n, |j, _| C64::new(1.0 + 0.1 * j as f64, 0.05 * (j % 3) as f64));
    v /= C64::new(v.norm(), 0.0);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = a.adjoint() * (a * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let new = nw.sqrt();
        v = w / C64::new(nw, 0.0);
        if (new - est).abs() <= tol * new {
            return new;
        }
        est = new;
    }
    est
}

/// Weighted norm of `a : H^μ → H^ν`, i.e. `‖W_ν A W_μ^{-1}‖` with diagonal weights.
pub fn weighted_norm(a: &CMat, w_out: &RVec, w_in: &RVec) -> f64 {
    let m = CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (w_out[i] / w_in[j]));
    op_norm(&m)
}

/// Real `2d × 2d` representation of a complex `d × d` matrix.
pub fn realify(a: &CMat) -> RMat {
    let (r, c) = a.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

pub fn to_real(v: &CVec) -> RVec {
    let d = v.len();
    RVec::from_fn(2 * d, |i, _| if i < d { v[i].re } else { v[i - d].im })
}

pub fn to_complex(v: &RVec) -> CVec {
    let d = v.len() / 2;
    CVec::from_fn(d, |i, _| C64::new(v[i], v[i + d]))
}

/// Orthonormal basis (as columns) of the real orthogonal complement of `v` in `ℝ^m`.
///
/// Uses the Householder reflector that maps `v/|v|` to the first unit vector.
pub fn orth_complement(v: &RVec) -> RMat {
    let m = v.len();
    let nv = v.norm();
    let mut u = v / nv;
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += s;
    let nu = u.norm();
    let h = if nu == 0.0 {
        RMat::identity(m, m)
    } else {
        let u = u / nu;
        RMat::identity(m, m) - (&u * u.transpose()) * 2.0
    };
    h.columns(1, m - 1).into_owned()
}

/// Solves the symmetric positive definite system `G x = b`, falling back to a
/// ridge `1e-12·trace` when the Cholesky factorization fails.
///
/// Returns the solution and whether the ridge was used.
pub fn spd_solve(g: &RMat, b: &RMat) -> Result<(RMat, bool)> {
    if let Some(ch) = g.clone().cholesky() {
        return Ok((ch.solve(b), false));
    }
    let ridge = 1e-12 * g.trace().abs().max(f64::MIN_POSITIVE);
    let mut gr = g.clone();
    for i in 0..gr.nrows() {
        gr[(i, i)] += ridge;
    }
    match gr.cholesky() {
        Some(ch) => Ok((ch.solve(b), true)),
        None => Err(Error::IllConditioned { what: "Gramian", cond: f64::INFINITY }),
    }
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn sym_eigenvalues(g: &RMat) -> Vec<f64> {
    let mut e: Vec<f64> = g.clone().symmetric_eigenvalues().iter().cloned().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn herm_eigenvalues(g: &CMat) -> Vec<f64> {
    let mut e: Vec<f64> = g.clone().symmetric_eigenvalues().iter().cloned().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// Inverse of a square complex matrix by LU.
pub fn inverse(a: &CMat, what: &'static str) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { what, cond: f64::INFINITY })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..lx.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}

/// Dense linear map on coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOp {
    pub mat: CMat,
}

impl LinearOp {
    pub fn new(mat: CMat) -> Self {
        Self { mat }
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: CMat::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { mat: CMat::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn apply(&self, u: &crate::spectral::Field) -> crate::spectral::Field {
        &self.mat * u
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LinearOp) -> LinearOp {
        LinearOp { mat: &self.mat * &other.mat }
    }

    /// Adjoint for the coefficient inner product.
    pub fn adjoint(&self) -> LinearOp {
        LinearOp { mat: self.mat.adjoint() }
    }

    /// `L² → L²` norm.
    pub fn norm(&self) -> f64 {
        op_norm(&self.mat)
    }

    /// Norm as a map `H^μ → H^ν`.
    pub fn norm_between(&self, grid: &crate::spectral::Grid, mu: f64, nu: f64) -> f64 {
        weighted_norm(&self.mat, &grid.sobolev_weights(nu), &grid.sobolev_weights(mu))
    }

    /// Power-iteration estimate (60 steps, relative guard `1e-10`).
    pub fn norm_estimate(&self) -> f64 {
        power_norm(&self.mat, 60, 1e-10)
    }
}
