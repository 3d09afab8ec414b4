//! Translation-invariant solutions `u(x, y) = g(x)` of `Δu = 2cosh(2u)`, i.e. the
//! Cauchy problem `g'' = 2cosh(2g)`, `g(0) = v0`, `g'(0) = 0`.
//!
//! The solution blows up at a finite half-width `δ(v0)`. Two independent routes
//! compute it: the blow-up abscissa of an adaptive Dormand–Prince integration and a
//! quadrature of the separated first integral `g'² = 2sinh(2g) - 2sinh(2v0)`.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::SurfaceData;
use crate::grid::{GridError, GridSpec, ScalarField};
use crate::quadrature::{cumulative_trapezoid, integrate_adaptive};
use crate::scalar::{c, Real};

/// Integration stops once `g` exceeds this value.
pub const BLOW_UP_GUARD: f64 = 300.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("initial value v0 = {0} must be non-negative")]
    NegativeInitialValue(f64),
    #[error("integration range must be positive, got {0}")]
    BadRange(f64),
    #[error("solution blows up at x = {x_reached} before reaching the requested end point")]
    BlowUp { x_reached: f64 },
    #[error("step size underflow at x = {0}")]
    StepUnderflow(f64),
    #[error("exceeded {0} integration steps")]
    MaxSteps(usize),
    #[error("adaptive quadrature for the blow-up half-width did not converge")]
    QuadratureFailure,
    #[error("grid abscissa |x| = {x} is outside the solved range (half-width {delta})")]
    DomainExceedsDelta { x: f64, delta: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeSettings<T> {
    /// Local error tolerance (absolute and relative).
    pub tol: T,
    pub initial_step: T,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeSettings<T> {
    fn default() -> Self {
        Self::with_tol(c(1e-10))
    }
}

impl<T: Real> OdeSettings<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, initial_step: c(1e-3), max_steps: 2_000_000 }
    }
}

/// One accepted integration node `(x, g(x), g'(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeSample<T> {
    pub x: T,
    pub g: T,
    pub dg: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution<T> {
    pub v0: T,
    /// Accepted steps on `[0, x_end]`, strictly increasing in `x`.
    pub samples: Vec<OdeSample<T>>,
    /// Maximal half-width from the separated-variable quadrature.
    pub delta_est: T,
    pub tol: T,
}

#[inline]
fn rhs<T: Real>(y: [T; 2]) -> [T; 2] {
    [y[1], c::<T>(2.0) * (c::<T>(2.0) * y[0]).cosh()]
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One DP5(4) step from `y` with step `h`: returns the 5th-order solution and the
/// embedded error estimate, or `None` if a stage is not finite.
fn dp_step<T: Real>(y: [T; 2], h: T) -> Option<([T; 2], [T; 2])> {
    let mut k = [[T::zero(); 2]; 7];
    k[0] = rhs(y);
    for s in 1..7 {
        let mut ys = y;
        for (r, kr) in k.iter().enumerate().take(s) {
            let a = c::<T>(A[s][r]);
            ys[0] += h * a * kr[0];
            ys[1] += h * a * kr[1];
        }
        k[s] = rhs(ys);
        if !(k[s][0].is_finite() && k[s][1].is_finite()) {
            return None;
        }
    }
    let mut y5 = y;
    let mut err = [T::zero(); 2];
    for s in 0..7 {
        let b5 = c::<T>(B5[s]);
        let db = c::<T>(B5[s] - B4[s]);
        for d in 0..2 {
            y5[d] += h * b5 * k[s][d];
            err[d] += h * db * k[s][d];
        }
    }
    Some((y5, err))
}

enum Stop<T> {
    Reached,
    BlowUp(T),
}

fn march<T: Real>(v0: T, x_max: T, settings: &OdeSettings<T>) -> Result<(Vec<OdeSample<T>>, Stop<T>), OdeError> {
    if !(v0 >= T::zero()) {
        return Err(OdeError::NegativeInitialValue(v0.as_f64()));
    }
    if !(x_max > T::zero()) {
        return Err(OdeError::BadRange(x_max.as_f64()));
    }
    let tol = settings.tol;
    let guard = c::<T>(BLOW_UP_GUARD);
    let mut y = [v0, T::zero()];
    let mut x = T::zero();
    // Kahan compensation: steps near the blow-up point are far below ulp(x).
    let mut x_comp = T::zero();
    let mut h = settings.initial_step.min(x_max);
    let mut samples = vec![OdeSample { x, g: y[0], dg: y[1] }];
    let mut steps = 0usize;
    loop {
        if steps >= settings.max_steps {
            return Err(OdeError::MaxSteps(settings.max_steps));
        }
        steps += 1;
        let finite_end = x_max.is_finite();
        let last = finite_end && x + h >= x_max;
        let step = if last { x_max - x } else { h };
        if step <= T::zero() {
            return Ok((samples, Stop::Reached));
        }
        let Some((y5, err)) = dp_step(y, step) else {
            h = step * c::<T>(0.25);
            if h == T::zero() {
                return Err(OdeError::StepUnderflow(x.as_f64()));
            }
            continue;
        };
        let mut e = T::zero();
        for d in 0..2 {
            let sc = tol + tol * y[d].abs().max(y5[d].abs());
            e = e.max(err[d].abs() / sc);
        }
        let grow = if e == T::zero() { c::<T>(5.0) } else { (c::<T>(0.9) * e.powf(c::<T>(-0.2))).min(c::<T>(5.0)).max(c::<T>(0.2)) };
        if e <= T::one() && y5[0].is_finite() && y5[1].is_finite() {
            y = y5;
            if last {
                x = x_max;
            } else {
                let add = step - x_comp;
                let nx = x + add;
                x_comp = (nx - x) - add;
                x = nx;
            }
            samples.push(OdeSample { x, g: y[0], dg: y[1] });
            if y[0] > guard {
                return Ok((samples, Stop::BlowUp(x)));
            }
            if last {
                return Ok((samples, Stop::Reached));
            }
            h = step * grow;
        } else {
            h = step * grow.min(c::<T>(0.9));
            if h == T::zero() {
                return Err(OdeError::StepUnderflow(x.as_f64()));
            }
        }
    }
}

/// Solve the Cauchy problem on `[0, x_max]`.
///
/// Fails with [`OdeError::BlowUp`] when `g` passes the overflow guard first; this is
/// the expected outcome for `x_max ≥ δ(v0)`.
pub fn integrate<T: Real>(v0: T, x_max: T, settings: &OdeSettings<T>) -> Result<OdeSolution<T>, OdeError> {
    let (samples, stop) = march(v0, x_max, settings)?;
    if let Stop::BlowUp(x) = stop {
        return Err(OdeError::BlowUp { x_reached: x.as_f64() });
    }
    // Duplicate abscissae can only arise from a final step shorter than ulp(x).
    let mut clean: Vec<OdeSample<T>> = Vec::with_capacity(samples.len());
    for s in samples {
        match clean.last_mut() {
            Some(p) if s.x <= p.x => *p = s,
            _ => clean.push(s),
        }
    }
    let delta_est = estimate_delta(v0)?;
    Ok(OdeSolution { v0, samples: clean, delta_est, tol: settings.tol })
}

/// Abscissa where the integrated `g` first exceeds [`BLOW_UP_GUARD`].
pub fn blow_up_abscissa<T: Real>(v0: T, settings: &OdeSettings<T>) -> Result<T, OdeError> {
    match march(v0, T::infinity(), settings)? {
        (_, Stop::BlowUp(x)) => Ok(x),
        (samples, Stop::Reached) => {
            Err(OdeError::StepUnderflow(samples.last().map(|s| s.x.as_f64()).unwrap_or(0.0)))
        }
    }
}

/// `ln(sinh(z) / z)` for `z ≥ 0`, without overflow.
fn ln_sinhc<T: Real>(z: T) -> T {
    if z < c::<T>(1e-4) {
        z * z / c::<T>(6.0)
    } else if z < c::<T>(20.0) {
        (z.sinh() / z).ln()
    } else {
        z - (c::<T>(2.0) * z).ln() + (-(-c::<T>(2.0) * z).exp()).ln_1p()
    }
}

fn ln_cosh<T: Real>(a: T) -> T {
    let a = a.abs();
    a + (-(c::<T>(2.0) * a)).exp().ln_1p() - c::<T>(std::f64::consts::LN_2)
}

/// `δ(v0) = ∫_{v0}^∞ dg / √(2sinh(2g) - 2sinh(2v0))`.
///
/// With `g = v0 + s²` and `sinh a - sinh b = 2cosh((a+b)/2)sinh((a-b)/2)` the
/// integrand becomes `1 / √(cosh(2v0 + s²) · sinh(s²)/s²)`, smooth at `s = 0` and
/// decaying like `e^{-s²}`; the range is cut where the tail is below `e^{-40}`.
pub fn estimate_delta<T: Real>(v0: T) -> Result<T, OdeError> {
    if !(v0 >= T::zero()) {
        return Err(OdeError::NegativeInitialValue(v0.as_f64()));
    }
    separated_quadrature(v0)
}

/// Separated-variable quadrature without the `v0 ≥ 0` precondition (the catenoid
/// branch `v0 < 0` is used to bound the existence range of Dirichlet problems).
pub fn separated_quadrature<T: Real>(v0: T) -> Result<T, OdeError> {
    let integrand = |s: T| {
        let z = s * s;
        (-(ln_cosh(c::<T>(2.0) * v0 + z) + ln_sinhc(z)) * c::<T>(0.5)).exp()
    };
    let s_max = c::<T>(40.0).sqrt();
    integrate_adaptive(integrand, T::zero(), s_max, c(1e-15), c(1e-14), 4000)
        .map(|e| e.value)
        .ok_or(OdeError::QuadratureFailure)
}

impl<T: Real> OdeSolution<T> {
    pub fn x_end(&self) -> T {
        self.samples.last().map(|s| s.x).unwrap_or(T::zero())
    }

    /// `(g(x), g'(x))` by cubic Hermite interpolation between accepted steps, using the
    /// even symmetry `g(-x) = g(x)` for negative `x`. `None` outside `[-x_end, x_end]`.
    pub fn eval(&self, x: T) -> Option<(T, T)> {
        let ax = x.abs();
        let sign = if x < T::zero() { -T::one() } else { T::one() };
        let n = self.samples.len();
        if ax > self.x_end() || n == 0 {
            return None;
        }
        if n == 1 {
            return Some((self.samples[0].g, T::zero()));
        }
        let k = match self.samples.binary_search_by(|s| s.x.partial_cmp(&ax).unwrap()) {
            Ok(k) => return Some((self.samples[k].g, sign * self.samples[k].dg)),
            Err(k) => k.clamp(1, n - 1),
        };
        let (a, b) = (self.samples[k - 1], self.samples[k]);
        let h = b.x - a.x;
        let t = (ax - a.x) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        let dda = c::<T>(2.0) * (c::<T>(2.0) * a.g).cosh();
        let ddb = c::<T>(2.0) * (c::<T>(2.0) * b.g).cosh();
        let g = h00 * a.g + h10 * h * a.dg + h01 * b.g + h11 * h * b.dg;
        let dg = h00 * a.dg + h10 * h * dda + h01 * b.dg + h11 * h * ddb;
        Some((g, sign * dg))
    }

    /// `max |g'² - 2sinh(2g) + 2sinh(2v0)|` over the accepted samples.
    pub fn first_integral_residual(&self) -> T {
        self.first_integral_residual_upto(self.x_end())
    }

    pub fn first_integral_residual_upto(&self, x_max: T) -> T {
        let two = c::<T>(2.0);
        let base = two * (two * self.v0).sinh();
        self.samples
            .iter()
            .filter(|s| s.x <= x_max)
            .map(|s| (s.dg * s.dg - two * (two * s.g).sinh() + base).abs())
            .fold(T::zero(), T::max)
    }

    /// Check `∫₀ˣ e^{g} > g(x) - v0` at every sample past the origin.
    pub fn length_lower_bound_check(&self) -> LengthCheck<T> {
        let xs: Vec<T> = self.samples.iter().map(|s| s.x).collect();
        let eg: Vec<T> = self.samples.iter().map(|s| s.g.exp()).collect();
        let length = cumulative_trapezoid(&xs, &eg);
        let mut first_violation = None;
        for (k, s) in self.samples.iter().enumerate().skip(1) {
            if !(length[k] > s.g - self.v0) {
                first_violation = Some(k);
                break;
            }
        }
        let last = self.samples.len() - 1;
        LengthCheck {
            holds: first_violation.is_none(),
            first_violation,
            length: length[last],
            rise: self.samples[last].g - self.v0,
            x: self.samples[last].x,
        }
    }

    /// Sample `u(x, y) = g(|x|)` on a grid.
    pub fn to_surface(&self, spec: GridSpec<T>) -> Result<SurfaceData<T>, OdeError> {
        let (x0, x1) = spec.x_range();
        let reach = x0.abs().max(x1.abs());
        if reach >= self.delta_est || reach > self.x_end() {
            return Err(OdeError::DomainExceedsDelta { x: reach.as_f64(), delta: self.delta_est.as_f64() });
        }
        let u = ScalarField::from_fn(spec, |x, _| self.eval(x).expect("inside solved range").0)?;
        Ok(SurfaceData::new(u))
    }
}

fn hermite_basis<T: Real>(t: T) -> (T, T, T, T) {
    let t2 = t * t;
    let t3 = t2 * t;
    let two = c::<T>(2.0);
    let three = c::<T>(3.0);
    (two * t3 - three * t2 + T::one(), t3 - two * t2 + t, -two * t3 + three * t2, t3 - t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthCheck<T> {
    pub holds: bool,
    pub first_violation: Option<usize>,
    /// `∫₀ˣ e^{g}` at the last sample.
    pub length: T,
    /// `g(x) - v0` at the last sample.
    pub rise: T,
    pub x: T,
}

/// Convenience: solve up to `frac · δ(v0)`.
pub fn integrate_fraction<T: Real>(v0: T, frac: T, settings: &OdeSettings<T>) -> Result<OdeSolution<T>, OdeError> {
    let delta = estimate_delta(v0)?;
    integrate(v0, frac * delta, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(v0: f64, frac: f64, tol: f64) -> OdeSolution<f64> {
        integrate_fraction(v0, frac, &OdeSettings::with_tol(tol)).unwrap()
    }

    #[test]
    fn cauchy_data() {
        for v0 in [0.0, 0.5] {
            let sol = solve(v0, 0.5, 1e-10);
            assert_eq!(sol.samples[0].g, v0);
            assert_eq!(sol.samples[0].dg, 0.0);
            let gpp = rhs([v0, 0.0])[1];
            assert_eq!(gpp, 2.0 * (2.0 * v0).cosh());
        }
    }

    #[test]
    fn power_series_near_origin() {
        // g = x² + (2/15) x⁶ + O(x⁸) for v0 = 0
        let sol = integrate(0.0, 0.06, &OdeSettings::with_tol(1e-14)).unwrap();
        let x: f64 = 0.05;
        let (g, _) = sol.eval(x).unwrap();
        let ratio = (g - x * x) / x.powi(6);
        assert!(ratio > 2.0 / 15.0 * 0.95 && ratio < 2.0 / 15.0 * 1.05, "ratio {ratio}");
    }

    #[test]
    fn residual_zero_at_origin() {
        let sol = solve(0.3, 0.5, 1e-10);
        assert_eq!(sol.first_integral_residual_upto(0.0), 0.0);
    }

    #[test]
    fn monotone_and_nonnegative() {
        let sol = solve(0.0, 0.95, 1e-10);
        for w in sol.samples.windows(2) {
            assert!(w[1].x > w[0].x);
            assert!(w[1].g >= w[0].g);
            assert!(w[1].dg > 0.0);
        }
        assert!(sol.samples.iter().all(|s| s.g >= 0.0 && s.x < sol.delta_est));
    }

    #[test]
    fn even_reflection() {
        let sol = solve(0.25, 0.8, 1e-10);
        for x in [0.1, 0.37, 0.6] {
            let (a, da) = sol.eval(x).unwrap();
            let (b, db) = sol.eval(-x).unwrap();
            assert_eq!(a, b);
            assert_eq!(da, -db);
        }
        assert!(sol.eval(sol.x_end() * 1.01).is_none());
    }

    #[test]
    fn first_integral_tight() {
        let sol = solve(0.0, 0.9, 1e-10);
        assert!(sol.first_integral_residual() <= 1e-8);
    }

    #[test]
    fn residual_scales_with_tolerance() {
        let a = solve(0.0, 0.9, 1e-8).first_integral_residual();
        let b = solve(0.0, 0.9, 0.5e-8).first_integral_residual();
        assert!(a / b >= 2.0, "ratio {}", a / b);
    }

    #[test]
    fn delta_decreasing() {
        let d0 = estimate_delta(0.0f64).unwrap();
        let d5 = estimate_delta(0.5f64).unwrap();
        assert!(d5 < d0);
        assert!(d0.is_finite() && d0 > 0.0);
    }

    #[test]
    fn delta_matches_blow_up() {
        for v0 in [0.0f64, 0.5] {
            let d = estimate_delta(v0).unwrap();
            let xb = blow_up_abscissa(v0, &OdeSettings::with_tol(1e-10)).unwrap();
            assert!((xb - d).abs() <= 1e-6, "v0 = {v0}: {xb} vs {d}");
        }
    }

    #[test]
    fn negative_start_rejected() {
        assert!(matches!(integrate(-1.0, 1.0, &OdeSettings::default()), Err(OdeError::NegativeInitialValue(_))));
        assert!(matches!(estimate_delta(-0.1f64), Err(OdeError::NegativeInitialValue(_))));
    }

    #[test]
    fn blow_up_reported() {
        let d = estimate_delta(0.0f64).unwrap();
        match integrate(0.0, 1.2 * d, &OdeSettings::default()) {
            Err(OdeError::BlowUp { x_reached }) => assert!((x_reached - d).abs() < 1e-6),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn length_bound() {
        let sol = solve(0.0, 0.5, 1e-10);
        let chk = sol.length_lower_bound_check();
        assert!(chk.holds);
        assert!(chk.length > chk.rise + 0.1);
    }

    #[test]
    fn surface_domain_checked() {
        let sol = solve(0.0, 0.5, 1e-10);
        let big = GridSpec::rectangle(-1.0, 1.0, 0.0, 1.0, 5, 5).unwrap();
        assert!(matches!(sol.to_surface(big), Err(OdeError::DomainExceedsDelta { .. })));
    }
}
