//! The translation-holonomy construction: the profile `ξ`, the Hessian potential
//! `G` and the assembled deformation on a tube around the developing curve.

use serde::Serialize;

use super::bump::{Bump, CompactBump};
use super::chart::{CurveChart, Holonomy};
use super::DeformError;
use crate::grid::{GridSpec, ScalarField};
use crate::quadrature::{gauss_legendre5, integrate_adaptive, simpson};
use crate::scalar::{c, Real};

/// Bump placements (centres as fractions of δ) tried in order.
pub const PLACEMENTS: [(f64, f64); 4] = [(1.0 / 3.0, 2.0 / 3.0), (0.25, 0.75), (0.2, 0.5), (0.5, 0.8)];
/// Relative determinant below which a placement is rejected.
pub const TOL_GENERIC: f64 = 1e-8;
/// Closedness tolerance for the cell circulations of `dG_x` and `dG_y`.
pub const TOL_CLOSED: f64 = 1e-10;

/// `h` and `h'` of the graph `y = h(x)`, `x ∈ [0, δ]`.
pub type GraphFn<'a, T> = dyn Fn(T) -> (T, T) + Sync + 'a;

/// `ξ = a·ψ₁ + b·ψ₂` with `∫ ξ h' = x₀` and `∫ ξ = −y₀` over `[0, δ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiProfile<T> {
    #[serde(skip)]
    pub bumps: [CompactBump<T>; 2],
    pub coef: [T; 2],
    pub placement: usize,
    /// Relative determinant `|det| / (‖row₁‖‖row₂‖)` of the accepted system.
    pub relative_det: T,
    /// Simpson residuals of the two moment conditions.
    pub residuals: [T; 2],
}

impl<T: Real> XiProfile<T> {
    /// `(ξ, ξ', ξ'')`.
    pub fn eval(&self, x: T) -> (T, T, T) {
        let (p, dp, ddp) = self.bumps[0].eval(x);
        let (q, dq, ddq) = self.bumps[1].eval(x);
        let [a, b] = self.coef;
        (a * p + b * q, a * dp + b * dq, a * ddp + b * ddq)
    }

    /// Support hull of `ξ`.
    pub fn support(&self) -> (T, T) {
        (self.bumps[0].support().0, self.bumps[1].support().1)
    }

    pub fn is_zero(&self) -> bool {
        self.coef[0] == T::zero() && self.coef[1] == T::zero()
    }
}

fn moments<T: Real>(h: &GraphFn<'_, T>, psi: CompactBump<T>, delta: T, n: usize) -> (T, T) {
    let dx = delta / T::from_usize_lossy(n);
    let mut w_dh = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let x = dx * T::from_usize_lossy(k);
        let p = psi.eval(x).0;
        w_dh.push(p * h(x).1);
        w.push(p);
    }
    (simpson(&w_dh, dx), simpson(&w, dx))
}

/// Solve for `ξ` by Simpson quadrature on `n_samples` intervals (made even), using
/// the best-conditioned bump placement.
pub fn solve_xi<T: Real>(h: &GraphFn<'_, T>, delta: T, target: (T, T), n_samples: usize) -> Result<XiProfile<T>, DeformError> {
    if !(delta > T::zero()) {
        return Err(DeformError::NoGraphWindow);
    }
    let n = (n_samples.max(8) + 1) / 2 * 2;
    let (x0, y0) = target;
    let width = delta * c::<T>(0.25);
    let mut best: Option<XiProfile<T>> = None;
    let mut best_det = T::zero();
    for (idx, &(c1, c2)) in PLACEMENTS.iter().enumerate() {
        let b1 = CompactBump::new(delta * c::<T>(c1), width);
        let b2 = CompactBump::new(delta * c::<T>(c2), width);
        if x0 == T::zero() && y0 == T::zero() {
            return Ok(XiProfile { bumps: [b1, b2], coef: [T::zero(); 2], placement: idx, relative_det: T::one(), residuals: [T::zero(); 2] });
        }
        let (m11, m21) = moments(h, b1, delta, n);
        let (m12, m22) = moments(h, b2, delta, n);
        let det = m11 * m22 - m12 * m21;
        let scale = (m11 * m11 + m12 * m12).sqrt() * (m21 * m21 + m22 * m22).sqrt();
        let rel = if scale > T::zero() { det.abs() / scale } else { T::zero() };
        if rel < c::<T>(TOL_GENERIC) || rel <= best_det {
            best_det = best_det.max(rel);
            continue;
        }
        best_det = rel;
        let a = (x0 * m22 - m12 * (-y0)) / det;
        let b = (m11 * (-y0) - m21 * x0) / det;
        let residuals = [(a * m11 + b * m12 - x0).abs(), (a * m21 + b * m22 + y0).abs()];
        best = Some(XiProfile { bumps: [b1, b2], coef: [a, b], placement: idx, relative_det: rel, residuals });
    }
    best.ok_or(DeformError::NonGenericCurve { deviation: best_det.as_f64(), tol: TOL_GENERIC })
}

/// Table of `(F, F', F'')` on a uniform grid, evaluated by quintic Hermite.
#[derive(Debug, Clone)]
struct HermiteTable<T> {
    dx: T,
    v: Vec<[T; 3]>,
}

impl<T: Real> HermiteTable<T> {
    fn eval(&self, x: T) -> T {
        let m = self.v.len() - 1;
        let pos = (x / self.dx).max(T::zero());
        let k = pos.floor().to_usize().unwrap_or(m).min(m - 1);
        let t = x / self.dx - T::from_usize_lossy(k);
        let (a, b) = (self.v[k], self.v[k + 1]);
        let h = self.dx;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h00 = T::one() - c::<T>(10.0) * t3 + c::<T>(15.0) * t4 - c::<T>(6.0) * t5;
        let h10 = t - c::<T>(6.0) * t3 + c::<T>(8.0) * t4 - c::<T>(3.0) * t5;
        let h20 = (t2 - c::<T>(3.0) * t3 + c::<T>(3.0) * t4 - t5) * c::<T>(0.5);
        let h01 = c::<T>(10.0) * t3 - c::<T>(15.0) * t4 + c::<T>(6.0) * t5;
        let h11 = c::<T>(-4.0) * t3 + c::<T>(7.0) * t4 - c::<T>(3.0) * t5;
        let h21 = (t3 - c::<T>(2.0) * t4 + t5) * c::<T>(0.5);
        h00 * a[0] + h10 * h * a[1] + h20 * h * h * a[2] + h01 * b[0] + h11 * h * b[1] + h21 * h * h * b[2]
    }

    fn last(&self) -> [T; 3] {
        self.v[self.v.len() - 1]
    }
}

/// Cumulative integrals with the endpoint-corrected trapezoid rule, which is exact
/// for cubics on each cell.
fn cumulative<T: Real>(dx: T, f: &[(T, T)]) -> Vec<T> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = T::zero();
    out.push(acc);
    let twelfth = dx * dx / c::<T>(12.0);
    for w in f.windows(2) {
        acc += dx * c::<T>(0.5) * (w[0].0 + w[1].0) + twelfth * (w[0].1 - w[1].1);
        out.push(acc);
    }
    out
}

/// `G(x, y) = (−x² + y²)/2 + y·Ξ(x) − J(x)` with `Ξ = ∫ξ`, `K = ∫ h ξ'`, `J = ∫K`,
/// and the affine correction `α` making `F = G + α` equal `Ψ_α` left of the slab and
/// `Ψ_α ∘ (z − c)` right of it.
#[derive(Debug, Clone)]
pub struct HessianPotential<T> {
    pub delta: T,
    pub target: (T, T),
    pub xi: XiProfile<T>,
    /// `G − Ψ₀(z − c)` on `x ≥ δ`.
    pub constant: T,
    /// Linear part `(p, q)` of `α`.
    pub alpha: (T, T),
    xi_int: HermiteTable<T>,
    j_int: HermiteTable<T>,
    k_delta: T,
}

/// Self-checks of a [`HessianPotential`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GCertificate<T> {
    /// `max |G − Ψ₀|` over the checked nodes with `x ≤ 0`.
    pub left_slab: T,
    /// `max |G − Ψ₀(z − c) − C|` over the checked nodes with `x ≥ δ`.
    pub right_slab: T,
    /// `|C − C_quad|` with `C_quad` from adaptive quadrature of `∫ σ h ξ'`.
    pub constant_mismatch: T,
    /// `|∫ h ξ' + x₀|` and `|∫ ξ + y₀|` from the tables.
    pub moment_defect: T,
    /// Max cell circulation of `dG_x` and `dG_y`.
    pub closedness: T,
    /// Max of `|G_xx + 1|`, `|G_yy − 1|` along the graph by central differences.
    pub hessian_on_curve: T,
    pub hessian_step: T,
}

pub(crate) fn psi0<T: Real>(x: T, y: T) -> T {
    (y * y - x * x) * c::<T>(0.5)
}

impl<T: Real> HessianPotential<T> {
    /// Build from the graph `h` on `[0, δ]` and the holonomy translation `c`.
    pub fn new(h: &GraphFn<'_, T>, delta: T, target: (T, T), n_samples: usize, m: usize) -> Result<Self, DeformError> {
        let xi0 = solve_xi(h, delta, target, n_samples)?;
        let m = m.max(16);
        let dx = delta / T::from_usize_lossy(m);
        let xs: Vec<T> = (0..=m).map(|k| dx * T::from_usize_lossy(k)).collect();
        let hs: Vec<(T, T)> = xs.iter().map(|&x| h(x)).collect();
        // per-basis tables; the moment conditions are re-imposed on the tables so
        // that the right slab is an exact translate
        let mut xi_cols = Vec::new();
        let mut k_cols = Vec::new();
        let mut j_cols = Vec::new();
        for b in xi0.bumps {
            let ev: Vec<(T, T, T)> = xs.iter().map(|&x| b.eval(x)).collect();
            let xi_f: Vec<(T, T)> = ev.iter().map(|e| (e.0, e.1)).collect();
            let xi_i = cumulative(dx, &xi_f);
            let kp: Vec<(T, T)> = ev.iter().zip(&hs).map(|(e, hv)| (hv.0 * e.1, hv.1 * e.1 + hv.0 * e.2)).collect();
            let k_i = cumulative(dx, &kp);
            let jp: Vec<(T, T)> = k_i.iter().zip(&kp).map(|(&k, d)| (k, d.0)).collect();
            let j_i = cumulative(dx, &jp);
            xi_cols.push((ev, xi_i));
            k_cols.push((kp, k_i));
            j_cols.push(j_i);
        }
        let (x0, y0) = target;
        let coef = if xi0.is_zero() {
            [T::zero(); 2]
        } else {
            let (k1, k2) = (k_cols[0].1[m], k_cols[1].1[m]);
            let (s1, s2) = (xi_cols[0].1[m], xi_cols[1].1[m]);
            let det = k1 * s2 - k2 * s1;
            [(-x0 * s2 + k2 * y0) / det, (k1 * (-y0) + s1 * x0) / det]
        };
        let [a, b] = coef;
        let xi_int = HermiteTable {
            dx,
            v: (0..=m).map(|k| [a * xi_cols[0].1[k] + b * xi_cols[1].1[k], a * xi_cols[0].0[k].0 + b * xi_cols[1].0[k].0, a * xi_cols[0].0[k].1 + b * xi_cols[1].0[k].1]).collect(),
        };
        let j_int = HermiteTable {
            dx,
            v: (0..=m).map(|k| [a * j_cols[0][k] + b * j_cols[1][k], a * k_cols[0].1[k] + b * k_cols[1].1[k], a * k_cols[0].0[k].0 + b * k_cols[1].0[k].0]).collect(),
        };
        let k_delta = j_int.last()[1];
        let j_delta = j_int.last()[0];
        let constant = -x0 * delta - j_delta + x0 * x0 * c::<T>(0.5) - y0 * y0 * c::<T>(0.5);
        let n2 = x0 * x0 + y0 * y0;
        let alpha = if n2 > T::zero() { (-constant * x0 / n2, -constant * y0 / n2) } else { (T::zero(), T::zero()) };
        let xi = XiProfile { coef, ..xi0 };
        Ok(Self { delta, target, xi, constant, alpha, xi_int, j_int, k_delta })
    }

    /// `G(x, y)`.
    pub fn g(&self, x: T, y: T) -> T {
        let base = psi0(x, y);
        if x <= T::zero() {
            return base;
        }
        if x >= self.delta {
            let e = self.xi_int.last()[0];
            let j = self.j_int.last()[0];
            return base + y * e - (j + (x - self.delta) * self.k_delta);
        }
        base + y * self.xi_int.eval(x) - self.j_int.eval(x)
    }

    /// `Ψ_α = Ψ₀ + α`.
    pub fn psi_alpha(&self, x: T, y: T) -> T {
        psi0(x, y) + self.alpha.0 * x + self.alpha.1 * y
    }

    /// `F = G + α`.
    pub fn f(&self, x: T, y: T) -> T {
        self.g(x, y) + self.alpha.0 * x + self.alpha.1 * y
    }

    /// Closed-form `(G_xx, G_xy, G_yy)` given `h(x)`.
    pub fn hessian(&self, x: T, y: T, hx: T) -> (T, T, T) {
        let (xi, dxi, _) = self.xi.eval(x);
        (-T::one() + (y - hx) * dxi, xi, T::one())
    }

    /// Max cell circulation of `ω₁ = (−1 + (y − h)ξ')dx + ξdy` and `ω₂ = ξdx + dy`
    /// on an `nx × ny` cell grid covering `[−δ/10, 11δ/10] × [y_lo, y_hi]`, with
    /// five-point Gauss–Legendre on each edge.
    pub fn closedness(&self, h: &GraphFn<'_, T>, y_range: (T, T), nx: usize, ny: usize) -> T {
        let x_lo = -self.delta * c::<T>(0.1);
        let hx = self.delta * c::<T>(1.2) / T::from_usize_lossy(nx);
        let hy = (y_range.1 - y_range.0) / T::from_usize_lossy(ny);
        let hfun = |x: T| if x <= T::zero() { h(T::zero()).0 } else if x >= self.delta { h(self.delta).0 } else { h(x).0 };
        let w1x = |x: T, y: T| -T::one() + (y - hfun(x)) * self.xi.eval(x).1;
        let w1y = |x: T| self.xi.eval(x).0;
        let mut worst = T::zero();
        for i in 0..nx {
            let (xa, xb) = (x_lo + hx * T::from_usize_lossy(i), x_lo + hx * T::from_usize_lossy(i + 1));
            for j in 0..ny {
                let (ya, yb) = (y_range.0 + hy * T::from_usize_lossy(j), y_range.0 + hy * T::from_usize_lossy(j + 1));
                let bottom = gauss_legendre5(|x| w1x(x, ya), xa, xb);
                let top = gauss_legendre5(|x| w1x(x, yb), xa, xb);
                let right = gauss_legendre5(|_| w1y(xb), ya, yb);
                let left = gauss_legendre5(|_| w1y(xa), ya, yb);
                let circ1 = bottom + right - top - left;
                let b2 = gauss_legendre5(|x| self.xi.eval(x).0, xa, xb);
                let t2 = gauss_legendre5(|x| self.xi.eval(x).0, xa, xb);
                let circ2 = b2 + (yb - ya) - t2 - (yb - ya);
                worst = worst.max(circ1.abs()).max(circ2.abs());
            }
        }
        worst
    }

    /// Max of `|G_xx + 1|`, `|G_yy − 1|` at `n − 1` interior points of the graph,
    /// by central differences of step `step`.
    pub fn hessian_defect_on_curve(&self, h: &GraphFn<'_, T>, step: T, n: usize) -> T {
        let mut worst = T::zero();
        for k in 1..n {
            let x = self.delta * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let y = h(x).0;
            let g0 = self.g(x, y);
            let gxx = (self.g(x + step, y) - c::<T>(2.0) * g0 + self.g(x - step, y)) / (step * step);
            let gyy = (self.g(x, y + step) - c::<T>(2.0) * g0 + self.g(x, y - step)) / (step * step);
            worst = worst.max((gxx + T::one()).abs()).max((gyy - T::one()).abs());
        }
        worst
    }

    /// Evaluate `G` on `spec` and run the self-checks.
    pub fn certify(&self, h: &GraphFn<'_, T>, spec: &GridSpec<T>) -> Result<(ScalarField<T>, GCertificate<T>), DeformError> {
        let (x0, y0) = self.target;
        let field = ScalarField::from_fn(*spec, |x, y| self.g(x, y))?;
        let mut left = T::zero();
        let mut right = T::zero();
        for (i, j) in spec.nodes() {
            let (x, y) = spec.xy(i, j);
            let g = field.at(i, j);
            if x <= T::zero() {
                left = left.max((g - psi0(x, y)).abs());
            } else if x >= self.delta {
                right = right.max((g - psi0(x - x0, y - y0) - self.constant).abs());
            }
        }
        let integrand = |s: T| s * h(s).0 * self.xi.eval(s).1;
        let tol = c::<T>(1e-13);
        let m_quad = integrate_adaptive(&integrand, T::zero(), self.delta, tol, tol, 20000)
            .map(|q| q.value)
            .ok_or(DeformError::QuadratureFailure)?;
        let c_quad = m_quad + (x0 * x0 - y0 * y0) * c::<T>(0.5);
        let moment_defect = (self.k_delta + x0).abs().max((self.xi_int.last()[0] + y0).abs());
        let (ylo, yhi) = spec.y_range();
        let closedness = self.closedness(h, (ylo, yhi), 1024, 2);
        let step = spec.h_max();
        let hess = self.hessian_defect_on_curve(h, step, 64);
        let cert = GCertificate {
            left_slab: left,
            right_slab: right,
            constant_mismatch: (self.constant - c_quad).abs(),
            moment_defect,
            closedness,
            hessian_on_curve: hess,
            hessian_step: step,
        };
        if closedness > c::<T>(TOL_CLOSED) {
            return Err(DeformError::ClosednessViolation { circulation: closedness.as_f64() });
        }
        Ok((field, cert))
    }
}

/// Number of samples used to locate the graph window.
const WINDOW_SAMPLES: usize = 2048;
/// Slope bound `|y'/x'|` inside the window.
const WINDOW_SLOPE: f64 = 5.0;

/// Deformation on a tube around a developing curve with translation holonomy.
#[derive(Debug, Clone)]
pub struct TranslationDeformation<T> {
    pub chart: CurveChart<T>,
    pub potential: HessianPotential<T>,
    /// Graph window `[a, b]` in the curve parameter.
    pub window: (T, T),
    /// `ζ(a)`, moved to the origin.
    pub shift: [T; 2],
    pub translation: (T, T),
    pub epsilon: T,
    pub bump: Bump<T>,
}

impl<T: Real> TranslationDeformation<T> {
    /// Locate a graph window, solve for `ξ` and assemble `F`.
    pub fn new(chart: CurveChart<T>, r: T) -> Result<Self, DeformError> {
        let translation = match chart.holonomy {
            Holonomy::Translation(a, b) if a == T::zero() && b == T::zero() => return Err(DeformError::ZeroHolonomyInTranslationCase),
            Holonomy::Translation(a, b) => (a, b),
            _ => return Err(DeformError::WrongHolonomyClass),
        };
        let l = chart.period;
        let epsilon = l / c::<T>(50.0);
        let n = WINDOW_SAMPLES;
        let ts: Vec<T> = (0..=n).map(|k| epsilon + (l - c::<T>(2.0) * epsilon) * T::from_usize_lossy(k) / T::from_usize_lossy(n)).collect();
        let good: Vec<bool> = ts
            .iter()
            .map(|&t| {
                let d = chart.jet(t).1;
                d[0] > T::zero() && d[1].abs() <= c::<T>(WINDOW_SLOPE) * d[0]
            })
            .collect();
        let (mut best, mut run_start) = ((0usize, 0usize), None);
        for k in 0..=n {
            match (good[k], run_start) {
                (true, None) => run_start = Some(k),
                (false, Some(s)) => {
                    if k - 1 - s > best.1 - best.0 {
                        best = (s, k - 1);
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            if n - s > best.1 - best.0 {
                best = (s, n);
            }
        }
        if best.1 <= best.0 || !good[best.0] {
            return Err(DeformError::NoGraphWindow);
        }
        let (a, b) = (ts[best.0], ts[best.1]);
        let shift = chart.zeta(a);
        let zb = chart.zeta(b);
        let delta = zb[0] - shift[0];
        let h = |x: T| graph_at(&chart, a, b, shift, delta, x);
        let potential = HessianPotential::new(&h, delta, translation, 4096, 4096)?;
        // the seams of the cover must lie where F equals Ψ_α or its translate
        let (lo, hi) = potential.xi.support();
        let na = chart.normal(a).0[0].abs();
        let nb = chart.normal(b).0[0].abs();
        if !potential.xi.is_zero() && (r * na >= lo || r * nb >= delta - hi) {
            return Err(DeformError::TubeTooWide { r: r.as_f64() });
        }
        let kappa = max_curvature(&chart, 512);
        if r * kappa >= T::one() {
            return Err(DeformError::TubeTooWide { r: r.as_f64() });
        }
        Ok(Self { chart, potential, window: (a, b), shift, translation, epsilon, bump: Bump::new(r) })
    }

    fn dev_local(&self, t: T, s: T) -> [T; 2] {
        let z = self.chart.dev(t, s);
        [z[0] - self.shift[0], z[1] - self.shift[1]]
    }

    /// Cover function `f̃` on `(−ε, L + ε) × ℝ` without the cutoff.
    pub fn raw(&self, t: T, s: T) -> T {
        let z = self.dev_local(t, s);
        if t <= self.window.0 {
            self.potential.psi_alpha(z[0], z[1])
        } else if t <= self.window.1 {
            self.potential.f(z[0], z[1])
        } else {
            self.potential.psi_alpha(z[0] - self.translation.0, z[1] - self.translation.1)
        }
    }

    /// `f(t, s) = φ(|s|)·f̃(t, s)` for any `t` (reduced to `[0, L)`).
    pub fn eval(&self, t: T, s: T) -> T {
        let phi = self.bump.eval(s.abs());
        if phi == T::zero() {
            return T::zero();
        }
        let l = self.chart.period;
        let tr = t - (t / l).floor() * l;
        phi * self.raw(tr, s)
    }

    /// `f` on a cylinder grid with `x ↔ s` and `y ↔ t`.
    pub fn field(&self, spec: &GridSpec<T>) -> Result<ScalarField<T>, DeformError> {
        match spec.period_y() {
            Some(p) if (p - self.chart.period).abs() <= c::<T>(1e-12) * p => {}
            _ => return Err(DeformError::BadChart),
        }
        let (slo, shi) = spec.x_range();
        if slo > -self.bump.r || shi < self.bump.r {
            return Err(DeformError::BallExceedsChart);
        }
        Ok(ScalarField::from_fn(*spec, |s, t| self.eval(t, s))?)
    }

    /// `max |f̃(t + L, s) − f̃(t, s)|` over `t ∈ (−ε, ε)`, `|s| < r`.
    pub fn periodicity_residual(&self, n: usize) -> T {
        let l = self.chart.period;
        let mut worst = T::zero();
        for i in 0..n {
            let t = -self.epsilon + c::<T>(2.0) * self.epsilon * (T::from_usize_lossy(i) + c::<T>(0.5)) / T::from_usize_lossy(n);
            for j in 0..n {
                let s = self.bump.r * (c::<T>(2.0) * (T::from_usize_lossy(j) + c::<T>(0.5)) / T::from_usize_lossy(n) - T::one());
                worst = worst.max((self.raw(t + l, s) - self.raw(t, s)).abs());
            }
        }
        worst
    }

    /// Value at a developed point `z` near the parameter `t_guess`.
    pub fn flat_value(&self, z: [T; 2], t_guess: T) -> Option<T> {
        let zz = [z[0] + self.shift[0], z[1] + self.shift[1]];
        let (t, s) = self.chart.dev_inverse(zz, (t_guess, T::zero()))?;
        let phi = self.bump.eval(s.abs());
        Some(phi * self.raw(t, s))
    }

    /// Max of `|f_xx + 1|`, `|f_yy − 1|` at `n` points of the curve, by central
    /// differences of step `step` in developed coordinates.
    pub fn flat_hessian_defect(&self, n: usize, step: T) -> Option<T> {
        let l = self.chart.period;
        let mut worst = T::zero();
        for k in 0..n {
            let t = l * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let z = self.dev_local(t, T::zero());
            let at = |dx: T, dy: T| self.flat_value([z[0] + dx, z[1] + dy], t);
            let f0 = at(T::zero(), T::zero())?;
            let fxx = (at(step, T::zero())? - c::<T>(2.0) * f0 + at(-step, T::zero())?) / (step * step);
            let fyy = (at(T::zero(), step)? - c::<T>(2.0) * f0 + at(T::zero(), -step)?) / (step * step);
            worst = worst.max((fxx + T::one()).abs()).max((fyy - T::one()).abs());
        }
        Some(worst)
    }
}

/// `(h(x), h'(x))` on the window by inverting `x(t)`.
fn graph_at<T: Real>(chart: &CurveChart<T>, a: T, b: T, shift: [T; 2], delta: T, x: T) -> (T, T) {
    let (mut lo, mut hi) = (a, b);
    let mut t = a + (b - a) * (x / delta);
    for _ in 0..100 {
        let (p, d, _) = chart.jet(t);
        let r = p[0] - shift[0] - x;
        if r > T::zero() {
            hi = t;
        } else {
            lo = t;
        }
        let mut next = t - r / d[0];
        if !(next > lo && next < hi) {
            next = (lo + hi) * c::<T>(0.5);
        }
        if (next - t).abs() <= T::epsilon() * (T::one() + t.abs()) {
            t = next;
            break;
        }
        t = next;
    }
    let (p, d, _) = chart.jet(t);
    (p[1] - shift[1], d[1] / d[0])
}

fn max_curvature<T: Real>(chart: &CurveChart<T>, n: usize) -> T {
    (0..n)
        .map(|k| {
            let t = chart.period * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let (_, d, dd) = chart.jet(t);
            (d[0] * dd[1] - d[1] * dd[0]).abs() / (d[0] * d[0] + d[1] * d[1]).powf(c::<T>(1.5))
        })
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parabola(x: f64) -> (f64, f64) {
        (0.3 * x * x, 0.6 * x)
    }

    #[test]
    fn xi_meets_moment_conditions() {
        let xi = solve_xi(&parabola, 1.0, (0.05, -0.1), 4096).unwrap();
        assert!(xi.residuals[0] < 1e-14 && xi.residuals[1] < 1e-14);
        let (lo, hi) = xi.support();
        assert!(lo > 0.0 && hi < 1.0);
    }

    #[test]
    fn symmetric_slope_avoids_symmetric_placements() {
        let h = |x: f64| ((x - 0.5).powi(3), 3.0 * (x - 0.5) * (x - 0.5));
        let xi = solve_xi(&h, 1.0, (0.05, -0.1), 4096).unwrap();
        assert!(xi.placement >= 2, "{}", xi.placement);
        assert!(xi.relative_det > 0.1, "{}", xi.relative_det);
    }

    #[test]
    fn affine_graph_is_not_generic() {
        let line = |_x: f64| (0.0, 0.25);
        assert!(matches!(solve_xi(&line, 1.0, (0.1, 0.2), 4096), Err(DeformError::NonGenericCurve { .. })));
        assert!(solve_xi(&line, 1.0, (0.0, 0.0), 4096).unwrap().is_zero());
    }

    #[test]
    fn potential_certificate() {
        let g = HessianPotential::new(&parabola, 1.0, (0.05, -0.1), 4096, 4096).unwrap();
        let spec = GridSpec::rectangle(-0.3, 1.3, -0.5, 0.8, 65, 53).unwrap();
        let (_, cert) = g.certify(&parabola, &spec).unwrap();
        assert_eq!(cert.left_slab, 0.0);
        assert!(cert.right_slab < 1e-12, "{cert:?}");
        assert!(cert.moment_defect < 1e-14, "{cert:?}");
        assert!(cert.constant_mismatch < 1e-10, "{cert:?}");
        assert!(cert.closedness < TOL_CLOSED, "{cert:?}");
        assert!(cert.hessian_on_curve > 0.0);
        let coarse = g.hessian_defect_on_curve(&parabola, 1.0 / 256.0, 64);
        let fine = g.hessian_defect_on_curve(&parabola, 1.0 / 512.0, 64);
        let ratio = coarse / fine;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }
}
