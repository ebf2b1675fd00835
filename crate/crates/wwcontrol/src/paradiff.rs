//! Periodic paradifferential operators, paraproducts and symbolic-calculus defects.
//!
//! On the lattice, `(T_a u)^(ξ) = Σ_η χ(ξ-η, η) ã(ξ-η, η) û(η)` where `ã(θ, η)` is
//! the normalized Fourier coefficient in `x` of `a(·, η)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, weighted_norm, CMat, LinearOp, C64, ZERO};
use crate::spectral::{fft_forward, Field, Grid};

/// Thresholds of the admissible cutoff `χ(θ, η)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for CutoffParams {
    fn default() -> Self {
        Self { eps1: 0.1, eps2: 0.3 }
    }
}

impl CutoffParams {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(0.0 < eps1 && eps1 < eps2 && eps2 < 1.0) {
            return Err(Error::Domain(format!("need 0 < eps1 < eps2 < 1, got {eps1}, {eps2}")));
        }
        Ok(Self { eps1, eps2 })
    }
}

/// `χ(θ, η)`: 1 for `|θ| <= ε₁|η|`, 0 for `|θ| >= ε₂|η|`, cosine ramp in `|θ|/|η|` between.
pub fn admissible_cutoff(theta: i64, eta: i64, p: &CutoffParams) -> f64 {
    if theta == 0 {
        return 1.0;
    }
    if eta == 0 {
        return 0.0;
    }
    let r = theta.abs() as f64 / eta.abs() as f64;
    if r <= p.eps1 {
        1.0
    } else if r >= p.eps2 {
        0.0
    } else {
        let s = (r - p.eps1) / (p.eps2 - p.eps1);
        0.5 * (1.0 + (PI * s).cos())
    }
}

/// Symbol `a(x_j, n)` sampled on the physical grid times the mode lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    /// Row `j` is the point `x_j`, column `k` the mode `n = k - N`.
    pub values: CMat,
    pub order: f64,
    pub tag: Option<String>,
}

impl Symbol {
    pub fn from_fn(grid: &Grid, order: f64, f: impl Fn(usize, i64) -> C64) -> Self {
        let values = CMat::from_fn(grid.mx, grid.dim(), |j, k| f(j, grid.mode(k)));
        Self { values, order, tag: None }
    }

    /// x-independent symbol.
    pub fn multiplier(grid: &Grid, order: f64, f: impl Fn(i64) -> C64) -> Self {
        let row: Vec<C64> = grid.modes().map(f).collect();
        Self::from_fn(grid, order, |_, n| row[grid.idx(n)]).tagged("multiplier")
    }

    /// Order-0 symbol `a(x)` given by physical samples.
    pub fn function(grid: &Grid, samples: &[C64]) -> Self {
        Self::from_fn(grid, 0.0, |j, _| samples[j]).tagged("function")
    }

    pub fn function_of_field(grid: &Grid, f: &Field) -> Self {
        Self::function(grid, &grid.to_physical(f))
    }

    pub fn constant(grid: &Grid, c: C64) -> Self {
        Self::multiplier(grid, 0.0, |_| c)
    }

    pub fn tagged(mut self, tag: &str) -> Self {
        self.tag = Some(tag.to_string());
        self
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn is_x_independent(&self, tol: f64) -> bool {
        let r0 = self.values.row(0);
        self.values.row_iter().all(|r| (r - r0).norm() <= tol)
    }

    /// Pointwise product of two symbols.
    pub fn times(&self, other: &Symbol) -> Symbol {
        Symbol {
            values: self.values.component_mul(&other.values),
            order: self.order + other.order,
            tag: None,
        }
    }

    pub fn plus(&self, other: &Symbol) -> Symbol {
        Symbol {
            values: &self.values + &other.values,
            order: self.order.max(other.order),
            tag: None,
        }
    }

    pub fn scale(&self, c: C64) -> Symbol {
        Symbol { values: &self.values * c, order: self.order, tag: self.tag.clone() }
    }

    pub fn conj(&self) -> Symbol {
        Symbol { values: self.values.map(|z| z.conj()), order: self.order, tag: None }
    }

    /// `∂_x a` by spectral differentiation of each column.
    pub fn dx(&self, grid: &Grid) -> Symbol {
        let mut values = self.values.clone();
        for k in 0..values.ncols() {
            let col: Vec<C64> = values.column(k).iter().cloned().collect();
            let d = spectral_dx(&col);
            for (j, v) in d.into_iter().enumerate() {
                values[(j, k)] = v;
            }
        }
        let _ = grid;
        Symbol { values, order: self.order, tag: None }
    }

    /// `∂_ξ a` by centered lattice differences (one-sided at the ends).
    pub fn dxi(&self) -> Symbol {
        let (m, d) = self.values.shape();
        let values = CMat::from_fn(m, d, |j, k| {
            if d == 1 {
                ZERO
            } else if k == 0 {
                self.values[(j, 1)] - self.values[(j, 0)]
            } else if k == d - 1 {
                self.values[(j, d - 1)] - self.values[(j, d - 2)]
            } else {
                (self.values[(j, k + 1)] - self.values[(j, k - 1)]) * 0.5
            }
        });
        Symbol { values, order: self.order - 1.0, tag: None }
    }
}

/// Spectral derivative of periodic samples.
pub fn spectral_dx(samples: &[C64]) -> Vec<C64> {
    let m = samples.len();
    let mut buf = samples.to_vec();
    fft_forward(&mut buf);
    for (i, v) in buf.iter_mut().enumerate() {
        let k = if i < m / 2 {
            i as f64
        } else if i == m / 2 && m % 2 == 0 {
            0.0
        } else {
            i as f64 - m as f64
        };
        *v *= C64::new(0.0, k / m as f64);
    }
    crate::spectral::fft_inverse(&mut buf);
    buf
}

/// Dense matrix of `T_a` on the lattice of `grid`.
pub fn paraop_matrix(grid: &Grid, a: &Symbol, cut: &CutoffParams) -> CMat {
    let d = grid.dim();
    let m = grid.mx;
    let inv = 1.0 / m as f64;
    let mut out = CMat::zeros(d, d);
    let x_indep = a.is_x_independent(0.0);
    for k in 0..d {
        let eta = grid.mode(k);
        if x_indep {
            out[(k, k)] = a.values[(0, k)];
            continue;
        }
        let mut col: Vec<C64> = a.values.column(k).iter().cloned().collect();
        fft_forward(&mut col);
        for j in 0..d {
            let xi = grid.mode(j);
            let theta = xi - eta;
            let chi = admissible_cutoff(theta, eta, cut);
            if chi != 0.0 {
                out[(j, k)] = col[theta.rem_euclid(m as i64) as usize] * (chi * inv);
            }
        }
    }
    out
}

/// `T_a` as a [`LinearOp`].
pub fn paraop(grid: &Grid, a: &Symbol, cut: &CutoffParams) -> LinearOp {
    LinearOp::new(paraop_matrix(grid, a, cut))
}

/// Paraproduct `T_a u` for a function `a`.
pub fn paraproduct(grid: &Grid, a: &Field, u: &Field, cut: &CutoffParams) -> Field {
    let coef = padded_coefficients(grid, a);
    let d = grid.dim();
    let mut out = Field::zeros(grid.n);
    for k in 0..d {
        let eta = grid.mode(k);
        let uk = u.coeffs[k];
        if uk == ZERO {
            continue;
        }
        for j in 0..d {
            let theta = grid.mode(j) - eta;
            let chi = admissible_cutoff(theta, eta, cut);
            if chi != 0.0 {
                out.coeffs[j] += coef(theta) * uk * chi;
            }
        }
    }
    out
}

/// Matrix of the linear map `a ↦ T_a u` for fixed `u`.
pub fn paraproduct_in_symbol(grid: &Grid, u: &Field, cut: &CutoffParams) -> CMat {
    let d = grid.dim();
    let mut out = CMat::zeros(d, d);
    for k in 0..d {
        let eta = grid.mode(k);
        let uk = u.coeffs[k];
        if uk == ZERO {
            continue;
        }
        for j in 0..d {
            let theta = grid.mode(j) - eta;
            if theta.abs() > grid.n as i64 {
                continue;
            }
            let chi = admissible_cutoff(theta, eta, cut);
            if chi != 0.0 {
                out[(j, grid.idx(theta))] += uk * chi;
            }
        }
    }
    out
}

fn padded_coefficients<'a>(grid: &'a Grid, a: &'a Field) -> impl Fn(i64) -> C64 + 'a {
    move |theta: i64| {
        if theta.abs() > grid.n as i64 {
            ZERO
        } else {
            a.get(theta)
        }
    }
}

/// Bony remainder `R(a, u) = au - T_a u - T_u a`.
pub fn bony_remainder(grid: &Grid, a: &Field, u: &Field, cut: &CutoffParams) -> Field {
    let au = grid.product(a, u);
    let tau = paraproduct(grid, a, u, cut);
    let tua = paraproduct(grid, u, a, cut);
    &(&au - &tau) - &tua
}

/// Estimator of the seminorm `M^m_ρ(a)`.
///
/// `ξ`-derivatives of order `α <= min(6+ρ, N)` are replaced by compact `α`-th
/// differences on the lattice, placed at the stencil midpoint and restricted to
/// one side of `ξ = 0` (symbols are only required to be smooth away from the
/// origin). `x`-regularity is measured in `W^{ρ,∞}` with spectral derivatives.
pub fn symbol_seminorm(grid: &Grid, a: &Symbol, m: f64, rho: usize) -> Result<f64> {
    if rho > 2 {
        return Err(Error::Domain(format!("seminorm index rho = {rho} not in {{0,1,2}}")));
    }
    let n = grid.n as i64;
    let amax = (6 + rho).min(grid.n);
    let wnorm = |col: Vec<C64>| -> f64 {
        let mut total = 0.0;
        let mut f = col;
        for r in 0..=rho {
            if r > 0 {
                f = spectral_dx(&f);
            }
            total += f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
        total
    };
    let col_at = |k: i64| -> Vec<C64> { a.values.column(grid.idx(k)).iter().cloned().collect() };
    let mut best = wnorm(col_at(0));
    for sign in [1i64, -1] {
        for alpha in 0..=amax {
            let width = alpha as i64;
            for start in 1..=(n - width) {
                let mut acc = vec![ZERO; grid.mx];
                for i in 0..=width {
                    let c = binom(alpha, i as usize) * if (width - i) % 2 == 0 { 1.0 } else { -1.0 };
                    let col = col_at(sign * (start + i));
                    for (s, v) in acc.iter_mut().zip(col) {
                        *s += v * c;
                    }
                }
                let mid = start as f64 + width as f64 / 2.0;
                let w = (1.0 + mid).powf(alpha as f64 - m);
                best = best.max(w * wnorm(acc));
            }
        }
    }
    Ok(best)
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Symbol `a ♯ b = Σ_{α<ρ} (1/(i^α α!)) ∂_ξ^α a ∂_x^α b`.
pub fn sharp(grid: &Grid, a: &Symbol, b: &Symbol, rho: usize) -> Symbol {
    let mut out = a.times(b);
    let mut da = a.clone();
    let mut db = b.clone();
    let mut fact = 1.0;
    for alpha in 1..rho {
        da = da.dxi();
        db = db.dx(grid);
        fact *= alpha as f64;
        let coef = C64::new(0.0, -1.0).powu(alpha as u32) / fact;
        out = out.plus(&da.times(&db).scale(coef));
    }
    out.order = a.order + b.order;
    out
}

/// Symbol `a* = Σ_{α<ρ} (1/(i^α α!)) ∂_ξ^α ∂_x^α conj(a)`.
pub fn adjoint_symbol(grid: &Grid, a: &Symbol, rho: usize) -> Symbol {
    let c = a.conj();
    let mut out = c.clone();
    let mut d = c;
    let mut fact = 1.0;
    for alpha in 1..rho {
        d = d.dxi().dx(grid);
        fact *= alpha as f64;
        let coef = C64::new(0.0, -1.0).powu(alpha as u32) / fact;
        out = out.plus(&d.scale(coef));
    }
    out.order = a.order;
    out
}

/// Defect of the composition rule together with its norm `H^μ → H^{μ-m-m'+ρ}`.
#[derive(Clone, Debug)]
pub struct Defect {
    pub op: LinearOp,
    pub norm: f64,
    pub mu: f64,
    pub nu: f64,
}

/// `T_a T_b - T_{a♯b}`.
pub fn calculus_defect(
    grid: &Grid,
    a: &Symbol,
    b: &Symbol,
    rho: usize,
    mu: f64,
    cut: &CutoffParams,
) -> Result<Defect> {
    if !(1..=2).contains(&rho) {
        return Err(Error::Domain(format!("calculus defect needs rho in {{1,2}}, got {rho}")));
    }
    let ta = paraop_matrix(grid, a, cut);
    let tb = paraop_matrix(grid, b, cut);
    let tab = paraop_matrix(grid, &sharp(grid, a, b, rho), cut);
    let mat = &ta * &tb - tab;
    let nu = mu - a.order - b.order + rho as f64;
    let norm = weighted_norm(&mat, &grid.sobolev_weights(nu), &grid.sobolev_weights(mu));
    Ok(Defect { op: LinearOp::new(mat), norm, mu, nu })
}

/// `(T_a)* - T_{a*}`.
pub fn adjoint_defect(grid: &Grid, a: &Symbol, rho: usize, mu: f64, cut: &CutoffParams) -> Result<Defect> {
    if !(1..=2).contains(&rho) {
        return Err(Error::Domain(format!("adjoint defect needs rho in {{1,2}}, got {rho}")));
    }
    let ta = paraop_matrix(grid, a, cut);
    let tas = paraop_matrix(grid, &adjoint_symbol(grid, a, rho), cut);
    let mat = ta.adjoint() - tas;
    let nu = mu - a.order + rho as f64;
    let norm = weighted_norm(&mat, &grid.sobolev_weights(nu), &grid.sobolev_weights(mu));
    Ok(Defect { op: LinearOp::new(mat), norm, mu, nu })
}

/// `‖T_a‖_{H^σ → H^σ} / ‖a‖_{L∞}` for a function symbol.
pub fn paraproduct_ratio(grid: &Grid, a: &Field, sigma: f64, cut: &CutoffParams) -> f64 {
    let sym = Symbol::function_of_field(grid, a);
    let t = paraop_matrix(grid, &sym, cut);
    let w = grid.sobolev_weights(sigma);
    let sup = grid.to_physical(a).iter().map(|z| z.norm()).fold(0.0, f64::max);
    weighted_norm(&t, &w, &w) / sup
}

/// Plain `L²` norm of `T_a`.
pub fn paraop_norm(grid: &Grid, a: &Symbol, cut: &CutoffParams) -> f64 {
    op_norm(&paraop_matrix(grid, a, cut))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rand_field(rng: &mut impl Rng, n: usize, decay: f64) -> Field {
        let mut f = Field::zeros(n);
        for k in -(n as i64)..=(n as i64) {
            let w = (1.0 + (k * k) as f64).powf(-decay / 2.0);
            f.set(k, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w);
        }
        f.re_part()
    }

    #[test]
    fn cutoff_examples() {
        let p = CutoffParams::default();
        assert_eq!(admissible_cutoff(1, 20, &p), 1.0);
        assert_eq!(admissible_cutoff(1, 2, &p), 0.0);
        assert_eq!(admissible_cutoff(0, 7, &p), 1.0);
        assert_eq!(admissible_cutoff(0, 0, &p), 1.0);
        let v = admissible_cutoff(2, 10, &p);
        assert!(v > 0.0 && v < 1.0);
        assert!(CutoffParams::new(0.3, 0.1).is_err());
    }

    #[test]
    fn paraop_examples() {
        let g = Grid::standard(24);
        let cut = CutoffParams::default();
        let one = Symbol::constant(&g, ONE);
        let t = paraop_matrix(&g, &one, &cut);
        assert!((t - CMat::identity(g.dim(), g.dim())).norm() < 1e-15);
        let e1: Vec<C64> = (0..g.mx).map(|j| C64::new(g.x(j).cos(), g.x(j).sin())).collect();
        let a = Symbol::function(&g, &e1);
        let u = g.unit(20, ONE);
        let r = paraop(&g, &a, &cut).apply(&u);
        assert!((&r - &g.unit(21, ONE)).l2_norm() < 1e-14);
        let u = g.unit(2, ONE);
        assert!(paraop(&g, &a, &cut).apply(&u).l2_norm() < 1e-15);
    }

    #[test]
    fn paraproduct_matches_paraop() {
        let g = Grid::standard(16);
        let cut = CutoffParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = rand_field(&mut rng, 16, 2.0);
        let u = rand_field(&mut rng, 16, 1.0);
        let t = paraop_matrix(&g, &Symbol::function_of_field(&g, &a), &cut);
        let r1 = &t * &u;
        let r2 = paraproduct(&g, &a, &u, &cut);
        assert!((&r1 - &r2).l2_norm() < 1e-13);
        let r3 = &paraproduct_in_symbol(&g, &u, &cut) * &a;
        assert!((&r1 - &r3).l2_norm() < 1e-13);
    }

    #[test]
    fn bony_constant_and_zero() {
        let g = Grid::standard(16);
        let cut = CutoffParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut u = rand_field(&mut rng, 16, 1.0);
        u.set(0, ZERO);
        let one = g.constant(ONE);
        assert!(bony_remainder(&g, &one, &u, &cut).l2_norm() < 1e-14);
        let z = Field::zeros(16);
        assert_eq!(bony_remainder(&g, &z, &z, &cut).l2_norm(), 0.0);
    }

    #[test]
    fn bony_smoothing_bound() {
        // R(a,u) gains regularity: ‖R‖_{H^{3.5}} / (‖a‖_{H^2} ‖u‖_{H^2}) stays bounded.
        let g = Grid::standard(32);
        let cut = CutoffParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut ratios = Vec::new();
        for _ in 0..100 {
            let a = rand_field(&mut rng, 32, 3.0);
            let u = rand_field(&mut rng, 32, 3.0);
            let r = bony_remainder(&g, &a, &u, &cut);
            ratios.push(r.sobolev_norm(3.5) / (a.sobolev_norm(2.0) * u.sobolev_norm(2.0)));
        }
        let k = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(k.is_finite() && k < 50.0, "fitted constant {k}");
    }

    #[test]
    fn seminorm_examples() {
        let g = Grid::standard(16);
        let one = Symbol::constant(&g, ONE);
        assert!((symbol_seminorm(&g, &one, 0.0, 0).unwrap() - 1.0).abs() < 1e-14);
        let mut vals = Vec::new();
        for n in [8usize, 16, 32] {
            let gn = Grid::standard(n);
            let l = Symbol::multiplier(&gn, 1.5, |k| C64::new(gn.ell(k as f64), 0.0));
            vals.push(symbol_seminorm(&gn, &l, 1.5, 0).unwrap());
        }
        for v in &vals {
            assert!((v / vals[0] - 1.0).abs() < 0.05, "{vals:?}");
        }
        let a = Symbol::from_fn(&g, 1.0, |j, n| {
            let x = g.x(j);
            C64::new(x.cos(), x.sin()) * (1.0 + (n * n) as f64).sqrt()
        });
        let v = symbol_seminorm(&g, &a, 1.0, 0).unwrap();
        assert!(v.is_finite() && v >= 1.0);
        assert!(symbol_seminorm(&g, &a, 1.0, 3).is_err());
    }

    #[test]
    fn multipliers_have_no_defect() {
        let g = Grid::standard(16);
        let cut = CutoffParams::default();
        let a = Symbol::multiplier(&g, 1.5, |k| C64::new(g.ell(k as f64), 0.0));
        let b = Symbol::multiplier(&g, 1.0, |k| C64::new(0.0, k as f64));
        let d = calculus_defect(&g, &a, &b, 1, 0.0, &cut).unwrap();
        assert!(d.op.mat.norm() < 1e-12);
        let d = calculus_defect(&g, &a, &b, 2, 0.0, &cut).unwrap();
        assert!(d.op.mat.norm() < 1e-12);
        let r = Symbol::multiplier(&g, 0.0, |k| C64::new(1.0 + 0.1 * (k * k) as f64, 0.0));
        assert!(adjoint_defect(&g, &r, 1, 0.0, &cut).unwrap().op.mat.norm() < 1e-13);
    }

    #[test]
    fn first_order_defect_bound() {
        // T_a T_b - T_{ab} for a = V(x) in, b = W(x) in is of order 1 (gain ρ = 1).
        let cut = CutoffParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut ks = Vec::new();
        for _ in 0..10 {
            let g = Grid::standard(24);
            let v = rand_field(&mut rng, 3, 0.0).resize(24);
            let w = rand_field(&mut rng, 3, 0.0).resize(24);
            let vs = g.to_physical(&v);
            let ws = g.to_physical(&w);
            let a = Symbol::from_fn(&g, 1.0, |j, n| vs[j] * C64::new(0.0, n as f64));
            let b = Symbol::from_fn(&g, 1.0, |j, n| ws[j] * C64::new(0.0, n as f64));
            let d = calculus_defect(&g, &a, &b, 1, 1.0, &cut).unwrap();
            let ma = symbol_seminorm(&g, &a, 1.0, 1).unwrap();
            let mb = symbol_seminorm(&g, &b, 1.0, 1).unwrap();
            ks.push(d.norm / (ma * mb));
        }
        let kmax = ks.iter().cloned().fold(0.0, f64::max);
        let kmin = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(kmax < 10.0 * kmin.max(1e-3), "{ks:?}");
    }

    #[test]
    fn calculus_defect_gains_order() {
        // Probing with e^{inx} beyond the cutoff ramps, ‖D e^{inx}‖ grows like n^{m+m'-ρ}.
        let cut = CutoffParams::default();
        let g = Grid::standard(80);
        let c: Vec<C64> = (0..g.mx).map(|j| C64::new(1.0 + 0.1 * g.x(j).cos(), 0.0)).collect();
        let a = Symbol::from_fn(&g, 1.0, |j, k| c[j] * g.ell(k as f64).powf(2.0 / 3.0));
        let b = Symbol::from_fn(&g, 1.5, |j, k| c[j] * g.ell(k as f64));
        let probes = [16.0, 32.0, 64.0];
        for rho in [1usize, 2] {
            let d = calculus_defect(&g, &a, &b, rho, 0.0, &cut).unwrap();
            let vals: Vec<f64> = probes.iter().map(|&n| d.op.apply(&g.unit(n as i64, ONE)).l2_norm()).collect();
            let slope = crate::linalg::loglog_slope(&probes, &vals);
            assert!(slope <= 2.5 - rho as f64 + 0.15, "rho {rho}: slope {slope} {vals:?}");
        }
    }

    #[test]
    fn adjoint_defect_of_function() {
        let cut = CutoffParams::default();
        let g = Grid::standard(16);
        let c = g.from_fn(|x| 1.0 + 0.1 * x.cos());
        let a = Symbol::function_of_field(&g, &c);
        let d = adjoint_defect(&g, &a, 1, 1.0, &cut).unwrap();
        let dc = g.to_physical(&g.dx(&c)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(d.norm <= 10.0 * dc, "{} vs {}", d.norm, dc);
    }

    #[test]
    fn adjoint_defect_order() {
        // For a = i c(x) ℓ(n) the ρ = 1 defect has order m - 1 = 1/2.
        let cut = CutoffParams::default();
        let g = Grid::standard(64);
        let c: Vec<C64> = (0..g.mx).map(|j| C64::new(1.0 + 0.1 * g.x(j).cos(), 0.0)).collect();
        let a = Symbol::from_fn(&g, 1.5, |j, k| c[j] * C64::new(0.0, g.ell(k as f64)));
        let d = adjoint_defect(&g, &a, 1, 0.0, &cut).unwrap();
        let ns = [8i64, 16, 32];
        let vals: Vec<f64> = ns.iter().map(|&n| d.op.apply(&g.unit(n, ONE)).l2_norm()).collect();
        let slope = crate::linalg::loglog_slope(&ns.map(|n| n as f64), &vals);
        assert!(slope < 0.5 + 0.25, "slope {slope}");
    }

    #[test]
    fn paraproduct_bound_regression() {
        let cut = CutoffParams::default();
        let g = Grid::standard(32);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for sigma in [0.0, 1.0, 2.0] {
            for _ in 0..5 {
                let a = rand_field(&mut rng, 32, 2.0);
                let k = paraproduct_ratio(&g, &a, sigma, &cut);
                assert!(k < 4.0, "sigma {sigma}: K = {k}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn paraop_is_linear_in_symbol(seed in 0u64..1000) {
            let g = Grid::standard(12);
            let cut = CutoffParams::default();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = rand_field(&mut rng, 12, 1.0);
            let b = rand_field(&mut rng, 12, 1.0);
            let u = rand_field(&mut rng, 12, 0.0);
            let s = &a + &b;
            let lhs = paraproduct(&g, &s, &u, &cut);
            let rhs = &paraproduct(&g, &a, &u, &cut) + &paraproduct(&g, &b, &u, &cut);
            prop_assert!((&lhs - &rhs).l2_norm() < 1e-13);
        }

        #[test]
        fn paraop_support_is_sum_of_supports(seed in 0u64..1000, p in 1i64..4, q in 4i64..12) {
            let g = Grid::standard(16);
            let cut = CutoffParams::default();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut a = Field::zeros(16);
            a.set(p, C64::new(rng.gen_range(-1.0..1.0), 0.0));
            let u = g.unit(q, ONE);
            let r = paraproduct(&g, &a, &u, &cut);
            for k in g.modes() {
                if k != p + q {
                    prop_assert!(r.get(k).norm() == 0.0);
                }
            }
        }
    }
}
