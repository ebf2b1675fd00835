//! Fourier lattice on the torus, truncated fields and Fourier multipliers.
//!
//! A [`Field`] stores the amplitudes `û(n)` for `|n| <= N` with the convention
//! `u(x) = Σ û(n) e^{inx}`. The analysis transform carries the `1/M_x` factor, so
//! the coefficient norm `(Σ|û(n)|²)^{1/2}` is the normalized `L²` norm and
//! `‖e^{ix}‖ = 1`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use nalgebra::DVector;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

/// Fluid depth `b`; `Infinite` replaces `tanh(b|ξ|)` by 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Depth {
    Finite(f64),
    Infinite,
}

/// Spatial lattice, physical constants and the uniform time lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Largest retained Fourier mode.
    pub n: usize,
    /// Number of physical samples, at least `3N+1`.
    pub mx: usize,
    /// Gravity.
    pub g: f64,
    pub depth: Depth,
    /// Time horizon.
    pub t_end: f64,
    /// Number of time steps.
    pub kt: usize,
}

/// Fourier multipliers available through [`Grid::apply_multiplier`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MultiplierKind {
    /// `ℓ(n)`
    L,
    /// `ℓ(n)^{1/2}`
    LHalf,
    /// `ℓ(n)^r`
    LPow(f64),
    /// `λ(n) = |n| tanh(b|n|)`
    G0,
    /// `|n|^r` (zero at `n = 0`)
    AbsD(f64),
    /// `in`
    Dx,
    /// `1/(in)` on `n != 0`; only for zero-mean fields.
    DxInv,
    /// 1 for `n != 0`, 0 at `n = 0`.
    ChiHigh,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>> =
        RefCell::new(HashMap::new());
}

fn plans(m: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANS.with(|p| {
        p.borrow_mut()
            .entry(m)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
            })
            .clone()
    })
}

/// In-place forward DFT `Σ_j a_j e^{-2πijk/m}` (no normalization).
pub fn fft_forward(buf: &mut [C64]) {
    let (f, _) = plans(buf.len());
    f.process(buf);
}

/// In-place inverse DFT `Σ_k a_k e^{2πijk/m}` (no normalization).
pub fn fft_inverse(buf: &mut [C64]) {
    let (_, b) = plans(buf.len());
    b.process(buf);
}

/// Smallest power of two that is at least `3N+1`.
pub fn default_mx(n: usize) -> usize {
    (3 * n + 1).next_power_of_two()
}

impl Grid {
    pub fn new(n: usize, mx: usize, g: f64, depth: Depth, t_end: f64, kt: usize) -> Result<Self> {
        if mx < 3 * n + 1 {
            return Err(Error::Domain(format!("M_x = {mx} is below 3N+1 = {}", 3 * n + 1)));
        }
        if !(g > 0.0) {
            return Err(Error::Domain(format!("gravity must be positive, got {g}")));
        }
        if let Depth::Finite(b) = depth {
            if !(b > 0.0) {
                return Err(Error::Domain(format!("depth must be positive, got {b}")));
            }
        }
        if kt == 0 || !(t_end > 0.0) {
            return Err(Error::Domain("time lattice needs K_t >= 1 and T > 0".into()));
        }
        Ok(Self { n, mx, g, depth, t_end, kt })
    }

    /// `g = 1`, `b = 1`, `T = 1`, `K_t = 256` and `M_x` from [`default_mx`].
    pub fn standard(n: usize) -> Self {
        Self {
            n,
            mx: default_mx(n),
            g: 1.0,
            depth: Depth::Finite(1.0),
            t_end: 1.0,
            kt: 256,
        }
    }

    pub fn with_time(&self, t_end: f64, kt: usize) -> Self {
        Self { t_end, kt, ..self.clone() }
    }

    pub fn with_modes(&self, n: usize) -> Self {
        let mx = if self.mx >= 3 * n + 1 { self.mx } else { default_mx(n) };
        Self { n, mx, ..self.clone() }
    }

    /// Number of coefficients `2N+1`.
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Storage index of mode `k`.
    pub fn idx(&self, k: i64) -> usize {
        (k + self.n as i64) as usize
    }

    /// Mode stored at index `j`.
    pub fn mode(&self, j: usize) -> i64 {
        j as i64 - self.n as i64
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.n as i64;
        -n..=n
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.kt as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Physical sample point `x_j = 2πj/M_x`.
    pub fn x(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.mx as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.mx).map(|j| self.x(j)).collect()
    }

    fn tanh_b(&self, a: f64) -> (f64, f64) {
        match self.depth {
            Depth::Infinite => (1.0, 0.0),
            Depth::Finite(b) => {
                let t = (b * a).tanh();
                (t, b * (1.0 - t * t))
            }
        }
    }

    /// `λ(ξ) = |ξ| tanh(b|ξ|)`.
    pub fn lambda(&self, xi: f64) -> f64 {
        let a = xi.abs();
        a * self.tanh_b(a).0
    }

    /// `ℓ(ξ) = ((g+ξ²)λ(ξ))^{1/2}`.
    pub fn ell(&self, xi: f64) -> f64 {
        ((self.g + xi * xi) * self.lambda(xi)).sqrt()
    }

    /// Exact derivative `∂_ξ ℓ(ξ)` for `ξ != 0` (odd in `ξ`).
    pub fn dell(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a == 0.0 {
            return 0.0;
        }
        let (t, dt) = self.tanh_b(a);
        let lam = a * t;
        let dlam = t + a * dt;
        let d = (2.0 * a * lam + (self.g + a * a) * dlam) / (2.0 * self.ell(a));
        d * xi.signum()
    }

    /// Symbol value of a multiplier at mode `k`.
    pub fn symbol(&self, kind: MultiplierKind, k: i64) -> C64 {
        let x = k as f64;
        match kind {
            MultiplierKind::L => C64::new(self.ell(x), 0.0),
            MultiplierKind::LHalf => C64::new(self.ell(x).sqrt(), 0.0),
            MultiplierKind::LPow(r) => {
                if k == 0 {
                    C64::new(if r == 0.0 { 1.0 } else { 0.0 }, 0.0)
                } else {
                    C64::new(self.ell(x).powf(r), 0.0)
                }
            }
            MultiplierKind::G0 => C64::new(self.lambda(x), 0.0),
            MultiplierKind::AbsD(r) => {
                if k == 0 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(x.abs().powf(r), 0.0)
                }
            }
            MultiplierKind::Dx => C64::new(0.0, x),
            MultiplierKind::DxInv => {
                if k == 0 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(0.0, -1.0 / x)
                }
            }
            MultiplierKind::ChiHigh => C64::new(if k == 0 { 0.0 } else { 1.0 }, 0.0),
        }
    }

    pub fn multiplier_diag(&self, kind: MultiplierKind) -> DVector<C64> {
        DVector::from_iterator(self.dim(), self.modes().map(|k| self.symbol(kind, k)))
    }

    pub fn multiplier_matrix(&self, kind: MultiplierKind) -> CMat {
        CMat::from_diagonal(&self.multiplier_diag(kind))
    }

    pub fn apply_multiplier(&self, kind: MultiplierKind, u: &Field) -> Result<Field> {
        self.check(u)?;
        if kind == MultiplierKind::DxInv && u.mean().norm() > 1e-14 * (1.0 + u.l2_norm()) {
            return Err(Error::Domain("DxInv needs a zero-mean field".into()));
        }
        let d = self.multiplier_diag(kind);
        Ok(Field::from_vec(u.coeffs.component_mul(&d)))
    }

    /// Checks that `u` lives on this lattice.
    pub fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::Length { expected: self.dim(), got: u.len() });
        }
        if u.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("field has non-finite entries".into()));
        }
        Ok(())
    }

    /// Samples `u(x_j)` on the `M_x` physical points.
    pub fn to_physical(&self, u: &Field) -> Vec<C64> {
        let m = self.mx;
        let mut buf = vec![C64::new(0.0, 0.0); m];
        for (j, c) in u.coeffs.iter().enumerate() {
            let k = u.mode(j);
            buf[k.rem_euclid(m as i64) as usize] += *c;
        }
        fft_inverse(&mut buf);
        buf
    }

    /// Real parts of the physical samples.
    pub fn to_physical_real(&self, u: &Field) -> Vec<f64> {
        self.to_physical(u).into_iter().map(|z| z.re).collect()
    }

    /// Analysis transform with `1/M_x` normalization, truncated to `|n| <= N`.
    pub fn to_spectral(&self, samples: &[C64]) -> Result<Field> {
        if samples.len() != self.mx {
            return Err(Error::Length { expected: self.mx, got: samples.len() });
        }
        Ok(self.coefficients(samples, self.n))
    }

    pub fn to_spectral_real(&self, samples: &[f64]) -> Result<Field> {
        let c: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.to_spectral(&c)
    }

    /// Normalized DFT coefficients of `samples` for `|k| <= kmax`.
    pub fn coefficients(&self, samples: &[C64], kmax: usize) -> Field {
        let m = samples.len();
        let mut buf = samples.to_vec();
        fft_forward(&mut buf);
        let inv = 1.0 / m as f64;
        let kmax = kmax as i64;
        Field::from_vec(DVector::from_iterator(
            (2 * kmax + 1) as usize,
            (-kmax..=kmax).map(|k| buf[k.rem_euclid(m as i64) as usize] * inv),
        ))
    }

    /// Product of two fields computed on the physical grid and truncated.
    pub fn product(&self, a: &Field, b: &Field) -> Field {
        let pa = self.to_physical(a);
        let pb = self.to_physical(b);
        let p: Vec<C64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        self.coefficients(&p, self.n)
    }

    /// Applies a pointwise function to the real samples of `u`.
    pub fn map_real(&self, u: &Field, f: impl Fn(f64) -> f64) -> Field {
        let s: Vec<C64> = self
            .to_physical(u)
            .into_iter()
            .map(|z| C64::new(f(z.re), 0.0))
            .collect();
        self.coefficients(&s, self.n)
    }

    /// Matrix of `u ↦ truncate(f·u)` for a function given by physical samples.
    ///
    /// Entry `(j,k)` is the aliased coefficient `f̃((n_j - n_k) mod M_x)`; for
    /// band-limited `f` this equals the exact product followed by truncation.
    pub fn mul_matrix_samples(&self, samples: &[C64]) -> CMat {
        let m = self.mx;
        let mut buf = samples.to_vec();
        fft_forward(&mut buf);
        let inv = 1.0 / m as f64;
        let d = self.dim();
        CMat::from_fn(d, d, |j, k| {
            let diff = self.mode(j) - self.mode(k);
            buf[diff.rem_euclid(m as i64) as usize] * inv
        })
    }

    pub fn mul_matrix_real(&self, samples: &[f64]) -> CMat {
        let c: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.mul_matrix_samples(&c)
    }

    /// Multiplication operator by a field.
    pub fn mul_matrix(&self, f: &Field) -> CMat {
        self.mul_matrix_samples(&self.to_physical(f))
    }

    /// Multiplication operator by the real part of a field.
    pub fn mul_matrix_re(&self, f: &Field) -> CMat {
        self.mul_matrix_real(&self.to_physical_real(f))
    }

    /// Diagonal Sobolev weights `(1+n²)^{s/2}`.
    pub fn sobolev_weights(&self, s: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.modes().map(|k| (1.0 + (k * k) as f64).powf(s / 2.0)),
        )
    }

    /// Field with a single mode `amp·e^{ikx}`.
    pub fn unit(&self, k: i64, amp: C64) -> Field {
        let mut f = Field::zeros(self.n);
        f.set(k, amp);
        f
    }

    /// Field of the real-valued function `f` sampled on the grid.
    pub fn from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        let s: Vec<C64> = (0..self.mx).map(|j| C64::new(f(self.x(j)), 0.0)).collect();
        self.coefficients(&s, self.n)
    }

    pub fn constant(&self, c: C64) -> Field {
        self.unit(0, c)
    }

    /// `∂_x u`.
    pub fn dx(&self, u: &Field) -> Field {
        let d = self.multiplier_diag(MultiplierKind::Dx);
        Field::from_vec(u.coeffs.component_mul(&d))
    }

    /// Zero-mean primitive `∂_x^{-1}` after removing the mean.
    pub fn dx_inv(&self, u: &Field) -> Field {
        let d = self.multiplier_diag(MultiplierKind::DxInv);
        Field::from_vec(u.coeffs.component_mul(&d))
    }
}

/// Complex amplitudes `û(n)` for `n = -N..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub coeffs: DVector<C64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self { coeffs: DVector::zeros(2 * n + 1) }
    }

    pub fn from_vec(coeffs: DVector<C64>) -> Self {
        assert!(coeffs.len() % 2 == 1, "field length must be odd");
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest mode `N`.
    pub fn nmax(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn mode(&self, j: usize) -> i64 {
        j as i64 - self.nmax() as i64
    }

    pub fn get(&self, k: i64) -> C64 {
        let n = self.nmax() as i64;
        if k.abs() > n {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    pub fn set(&mut self, k: i64, v: C64) {
        let n = self.nmax() as i64;
        self.coeffs[(k + n) as usize] = v;
    }

    pub fn mean(&self) -> C64 {
        self.get(0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.norm()
    }

    /// `(Σ (1+n²)^s |û(n)|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = self.mode(j) as f64;
                (1.0 + k * k).powf(s) * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Whether `û(-n) = conj û(n)` up to `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        let n = self.nmax() as i64;
        (0..=n).all(|k| (self.get(-k) - self.get(k).conj()).norm() <= tol)
    }

    pub fn is_zero_mean(&self, tol: f64) -> bool {
        self.mean().norm() <= tol
    }

    /// Coefficients of the complex conjugate function.
    pub fn conj_fn(&self) -> Field {
        let n = self.nmax() as i64;
        let mut out = Field::zeros(self.nmax());
        for k in -n..=n {
            out.set(k, self.get(-k).conj());
        }
        out
    }

    /// Coefficients of `Re u`.
    pub fn re_part(&self) -> Field {
        let c = self.conj_fn();
        Field::from_vec((&self.coeffs + &c.coeffs) * C64::new(0.5, 0.0))
    }

    /// Coefficients of `Im u`.
    pub fn im_part(&self) -> Field {
        let c = self.conj_fn();
        Field::from_vec((&self.coeffs - &c.coeffs) * C64::new(0.0, -0.5))
    }

    pub fn scale(&self, a: f64) -> Field {
        Field::from_vec(&self.coeffs * C64::new(a, 0.0))
    }

    pub fn scale_c(&self, a: C64) -> Field {
        Field::from_vec(&self.coeffs * a)
    }

    /// Real inner product `Re Σ a(n) conj b(n)`.
    pub fn dot_re(&self, other: &Field) -> f64 {
        self.coeffs.dotc(&other.coeffs).re
    }

    /// Truncates or zero-pads to a lattice with largest mode `n`.
    pub fn resize(&self, n: usize) -> Field {
        let mut out = Field::zeros(n);
        let m = n.min(self.nmax()) as i64;
        for k in -m..=m {
            out.set(k, self.get(k));
        }
        out
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, o: &Field) -> Field {
        Field::from_vec(&self.coeffs + &o.coeffs)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, o: &Field) -> Field {
        Field::from_vec(&self.coeffs - &o.coeffs)
    }
}

impl Add for Field {
    type Output = Field;
    fn add(self, o: Field) -> Field {
        Field::from_vec(self.coeffs + o.coeffs)
    }
}

impl Sub for Field {
    type Output = Field;
    fn sub(self, o: Field) -> Field {
        Field::from_vec(self.coeffs - o.coeffs)
    }
}

impl Neg for Field {
    type Output = Field;
    fn neg(self) -> Field {
        Field::from_vec(-self.coeffs)
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, o: &Field) {
        self.coeffs += &o.coeffs;
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, o: &Field) {
        self.coeffs -= &o.coeffs;
    }
}

impl Mul<&Field> for &CMat {
    type Output = Field;
    fn mul(self, u: &Field) -> Field {
        Field::from_vec(self * &u.coeffs)
    }
}

/// Smooth bump equal to 1 on `[a+r, b-r]`, 0 outside `(a, b)`, with `C^∞`
/// transitions of width `r` (periodized).
pub fn smooth_bump(x: f64, a: f64, b: f64, r: f64) -> f64 {
    let y = (x - a).rem_euclid(2.0 * PI);
    let len = b - a;
    if len >= 2.0 * PI - 1e-14 && r <= 0.0 {
        return 1.0;
    }
    if y <= 0.0 || y >= len {
        return 0.0;
    }
    let up = smooth_step(y / r);
    let down = smooth_step((len - y) / r);
    up.min(down)
}

/// `C^∞` step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let a = f(t);
    let b = f(1.0 - t);
    a / (a + b)
}
