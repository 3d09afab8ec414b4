//! Deformations `f` supported near the zero locus `Z` whose Hessian on `Z` has
//! the sign pattern `f_xx = −1`, `f_yy = +1` in the flat chart.

mod bump;
mod chart;
mod translation;
mod zlocus;

use serde::Serialize;
use thiserror::Error;

pub use bump::{smooth_step, Bump, CompactBump};
pub use chart::{CurveChart, Holonomy};
pub use translation::{solve_xi, GCertificate, GraphFn, HessianPotential, TranslationDeformation, XiProfile, PLACEMENTS, TOL_CLOSED, TOL_GENERIC};
pub use zlocus::{detect_z, genericity_check, line_deviation, ZComponent, ZKind};

use crate::geometry::SurfaceData;
use crate::grid::{GridError, GridSpec, ScalarField};
use crate::scalar::{c, Real};
use translation::psi0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeformError {
    #[error("u is negative somewhere (min {min:e})")]
    NotWeaklyBounded { min: f64 },
    #[error("curve is too close to a straight line (measure {deviation:e}, tolerance {tol:e})")]
    NonGenericCurve { deviation: f64, tol: f64 },
    #[error("component is not a curve")]
    NotACurve,
    #[error("the ball of radius r does not fit in the chart")]
    BallExceedsChart,
    #[error("the builder does not apply to this holonomy class")]
    WrongHolonomyClass,
    #[error("translation holonomy with zero translation")]
    ZeroHolonomyInTranslationCase,
    #[error("neighbourhoods of radius r around two components overlap")]
    OverlappingNeighbourhoods,
    #[error("cell circulation {circulation:e} exceeds the closedness tolerance")]
    ClosednessViolation { circulation: f64 },
    #[error("no window where the developing curve is a graph over x")]
    NoGraphWindow,
    #[error("tube radius {r} is too wide for the curve")]
    TubeTooWide { r: f64 },
    #[error("inconsistent chart or grid for the curve")]
    BadChart,
    #[error("could not fit the curve as a graph over y")]
    CurveFit,
    #[error("quadrature failed to converge")]
    QuadratureFailure,
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn wrap_dy<T: Real>(spec: &GridSpec<T>, dy: T) -> T {
    match spec.period_y() {
        Some(p) => dy - (dy / p).round() * p,
        None => dy,
    }
}

/// `f = φ(|z − z₀|)·(−(x − x₀)² + (y − y₀)²)/2` with the periodic minimal image.
pub fn build_point_f<T: Real>(spec: &GridSpec<T>, z0: (T, T), r: T) -> Result<ScalarField<T>, DeformError> {
    let (xlo, xhi) = spec.x_range();
    if z0.0 - r < xlo || z0.0 + r > xhi {
        return Err(DeformError::BallExceedsChart);
    }
    match spec.period_y() {
        Some(p) if c::<T>(2.0) * r >= p => return Err(DeformError::BallExceedsChart),
        Some(_) => {}
        None => {
            let (ylo, yhi) = spec.y_range();
            if z0.1 - r < ylo || z0.1 + r > yhi {
                return Err(DeformError::BallExceedsChart);
            }
        }
    }
    let phi = Bump::new(r);
    Ok(ScalarField::from_fn(*spec, |x, y| {
        let (dx, dy) = (x - z0.0, wrap_dy(spec, y - z0.1));
        phi.eval((dx * dx + dy * dy).sqrt()) * psi0(dx, dy)
    })?)
}

/// Tube deformation `φ(|s|)·Ψ₀(dev(t, s))` for trivial and half-turn holonomy, for
/// which `Ψ₀` is invariant.
#[derive(Debug, Clone)]
pub struct TubeDeformation<T> {
    pub chart: CurveChart<T>,
    pub bump: Bump<T>,
}

impl<T: Real> TubeDeformation<T> {
    pub fn new(chart: CurveChart<T>, r: T) -> Result<Self, DeformError> {
        if matches!(chart.holonomy, Holonomy::Translation(..)) {
            return Err(DeformError::WrongHolonomyClass);
        }
        Ok(Self { chart, bump: Bump::new(r) })
    }

    pub fn eval(&self, t: T, s: T) -> T {
        let z = self.chart.dev(t, s);
        self.bump.eval(s.abs()) * psi0(z[0], z[1])
    }

    /// Value at a developed point `z` near the parameter `t_guess`.
    pub fn flat_value(&self, z: [T; 2], t_guess: T) -> Option<T> {
        let (t, s) = self.chart.dev_inverse(z, (t_guess, T::zero()))?;
        Some(self.eval(t, s))
    }

    /// `f` on a cylinder grid with `x ↔ s` and `y ↔ t`.
    pub fn field(&self, spec: &GridSpec<T>) -> Result<ScalarField<T>, DeformError> {
        check_tube_grid(spec, self.chart.period, self.bump.r)?;
        Ok(ScalarField::from_fn(*spec, |s, t| self.eval(t, s))?)
    }
}

fn check_tube_grid<T: Real>(spec: &GridSpec<T>, period: T, r: T) -> Result<(), DeformError> {
    match spec.period_y() {
        Some(p) if (p - period).abs() <= c::<T>(1e-12) * p => {}
        _ => return Err(DeformError::BadChart),
    }
    let (slo, shi) = spec.x_range();
    if slo > -r || shi < r {
        return Err(DeformError::BallExceedsChart);
    }
    Ok(())
}

/// Build the half-turn (or trivial) deformation on a cylinder grid.
pub fn build_halfturn_f<T: Real>(chart: CurveChart<T>, r: T, spec: &GridSpec<T>) -> Result<ScalarField<T>, DeformError> {
    TubeDeformation::new(chart, r)?.field(spec)
}

/// Build the translation deformation on a cylinder grid.
pub fn build_translation_f<T: Real>(chart: CurveChart<T>, r: T, spec: &GridSpec<T>) -> Result<(ScalarField<T>, TranslationDeformation<T>), DeformError> {
    let d = TranslationDeformation::new(chart, r)?;
    Ok((d.field(spec)?, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PieceKind {
    Point,
    Arc,
    Wrapping,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece<T> {
    pub kind: PieceKind,
    pub centroid: (T, T),
    /// Window and `ξ` data for wrapping curves.
    pub xi: Option<XiProfile<T>>,
    pub alpha: Option<(T, T)>,
    /// `(step, defect)` along wrapping curves: the max of `|f_xx + 1|` and
    /// `|f_yy − 1|` by central differences of `F` off the grid.
    pub curve_hessian_defect: Option<(T, T)>,
}

/// Assembled deformation and the pieces it was built from.
#[derive(Debug, Clone)]
pub struct DeformationProfile<T> {
    pub f: ScalarField<T>,
    pub r: T,
    pub pieces: Vec<Piece<T>>,
}

/// Samples per foot-point scan when evaluating wrapping curves on the grid.
const FOOT_SCAN: usize = 64;

fn component_distance<T: Real>(spec: &GridSpec<T>, a: &ZComponent<T>, b: &ZComponent<T>) -> T {
    let shifts: Vec<T> = match spec.period_y() {
        Some(p) => vec![-p, T::zero(), p],
        None => vec![T::zero()],
    };
    let mut d = T::infinity();
    for &p in &a.samples {
        for &sh in &shifts {
            d = d.min(b.distance((p.0, p.1 + sh)));
        }
    }
    d
}

/// Fit `x = X(y)` by a trigonometric polynomial of period `p` (least squares).
fn fit_periodic_graph<T: Real>(samples: &[(T, T)], p: T) -> Result<(T, Vec<T>, Vec<T>), DeformError> {
    let n = samples.len();
    let k = (n / 4).clamp(1, 8);
    let m = 2 * k + 1;
    let w = T::PI() * c::<T>(2.0) / p;
    let basis = |y: T| {
        let mut v = vec![T::one()];
        for q in 1..=k {
            let (s, co) = (w * c::<T>(q as f64) * y).sin_cos();
            v.push(co);
            v.push(s);
        }
        v
    };
    let mut a = vec![vec![T::zero(); m]; m];
    let mut rhs = vec![T::zero(); m];
    for &(x, y) in samples {
        let b = basis(y);
        for i in 0..m {
            rhs[i] += b[i] * x;
            for j in 0..m {
                a[i][j] += b[i] * b[j];
            }
        }
    }
    let sol = solve_dense(a, rhs).ok_or(DeformError::CurveFit)?;
    let cos = (0..k).map(|q| sol[1 + 2 * q]).collect();
    let sin = (0..k).map(|q| sol[2 + 2 * q]).collect();
    Ok((sol[0], cos, sin))
}

fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= T::epsilon() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s = (i + 1..n).fold(b[i], |acc, k| acc - a[i][k] * x[k]);
        x[i] = s / a[i][i];
    }
    Some(x)
}

/// Sum the local constructions for every component of `Z`.
///
/// Points use [`build_point_f`] at the centroid; curves that do not wind around
/// the chart use `φ(d(z, Z))·Ψ₀(z − z_c)`; curves that wind around a cylinder are
/// fitted as graphs `x = X(y)` and use the translation construction.
pub fn assemble_f<T: Real>(s: &SurfaceData<T>, comps: &[ZComponent<T>], r: T) -> Result<DeformationProfile<T>, DeformError> {
    let spec = *s.spec();
    for (i, a) in comps.iter().enumerate() {
        for b in &comps[i + 1..] {
            if component_distance(&spec, a, b) < c::<T>(2.0) * r {
                return Err(DeformError::OverlappingNeighbourhoods);
            }
        }
    }
    let mut total = vec![T::zero(); spec.len()];
    let mut pieces = Vec::new();
    let phi = Bump::new(r);
    let step = spec.h_max() * c::<T>(0.25);
    for comp in comps {
        match (comp.kind, comp.wraps) {
            (ZKind::Point, _) => {
                let f = build_point_f(&spec, comp.centroid, r)?;
                for (t, v) in total.iter_mut().zip(f.values()) {
                    *t += *v;
                }
                pieces.push(Piece { kind: PieceKind::Point, centroid: comp.centroid, xi: None, alpha: None, curve_hessian_defect: None });
            }
            (ZKind::Curve, false) => {
                let (xlo, xhi) = spec.x_range();
                if comp.samples.iter().any(|p| p.0 - r < xlo || p.0 + r > xhi) {
                    return Err(DeformError::BallExceedsChart);
                }
                let shifts: Vec<T> = match spec.period_y() {
                    Some(p) => vec![-p, T::zero(), p],
                    None => vec![T::zero()],
                };
                let zc = comp.centroid;
                for (k, (i, j)) in spec.nodes().enumerate() {
                    let (x, y) = spec.xy(i, j);
                    let (d, sh) = shifts
                        .iter()
                        .map(|&sh| (comp.distance((x, y + sh)), sh))
                        .fold((T::infinity(), T::zero()), |m, v| if v.0 < m.0 { v } else { m });
                    let w = phi.eval(d);
                    if w > T::zero() {
                        total[k] += w * psi0(x - zc.0, y + sh - zc.1);
                    }
                }
                pieces.push(Piece { kind: PieceKind::Arc, centroid: zc, xi: None, alpha: None, curve_hessian_defect: None });
            }
            (ZKind::Curve, true) => {
                let p = spec.period_y().ok_or(DeformError::BadChart)?;
                genericity_check(comp, None)?;
                let (c0, cos, sin) = fit_periodic_graph(&comp.samples, p)?;
                let chart = CurveChart::new(
                    p,
                    Holonomy::Translation(T::zero(), p),
                    [c0, T::zero()],
                    cos.into_iter().map(|a| [a, T::zero()]).collect(),
                    sin.into_iter().map(|b| [b, T::zero()]).collect(),
                )?;
                let d = TranslationDeformation::new(chart, r)?;
                let reach = r * c::<T>(1.05);
                let lip = (0..FOOT_SCAN * 8)
                    .map(|q| d.chart.jet(p * T::from_usize_lossy(q) / T::from_usize_lossy(FOOT_SCAN * 8)).1[0].abs())
                    .fold(T::zero(), T::max);
                for (k, (i, j)) in spec.nodes().enumerate() {
                    let (x, y) = spec.xy(i, j);
                    // a foot point within `reach` has |t - y| < reach since ζ(t) = (X(t), t)
                    if (x - d.chart.zeta(y)[0]).abs() >= reach * (c::<T>(1.1) + lip) {
                        continue;
                    }
                    let (t0, d2) = (0..=FOOT_SCAN)
                        .map(|q| y - reach + c::<T>(2.0) * reach * T::from_usize_lossy(q) / T::from_usize_lossy(FOOT_SCAN))
                        .map(|t| {
                            let z = d.chart.zeta(t);
                            (t, (z[0] - x) * (z[0] - x) + (z[1] - y) * (z[1] - y))
                        })
                        .fold((y, T::infinity()), |m, v| if v.1 < m.1 { v } else { m });
                    if d2.sqrt() > reach {
                        continue;
                    }
                    let z0 = d.chart.zeta(t0);
                    let n0 = d.chart.normal(t0).0;
                    let s0 = (x - z0[0]) * n0[0] + (y - z0[1]) * n0[1];
                    let (tt, ss) = d.chart.dev_inverse([x, y], (t0, s0)).ok_or(DeformError::BadChart)?;
                    total[k] += d.eval(tt, ss);
                }
                pieces.push(Piece {
                    kind: PieceKind::Wrapping,
                    centroid: comp.centroid,
                    xi: Some(d.potential.xi.clone()),
                    alpha: Some(d.potential.alpha),
                    curve_hessian_defect: d.flat_hessian_defect(256, step).map(|v| (step, v)),
                });
            }
        }
    }
    Ok(DeformationProfile { f: ScalarField::new(spec, total)?, r, pieces })
}

/// `(max |Δ⁴_x f|/h_x⁴, max |Δ⁴_y f|/h_y⁴)` over all nodes where the stencils fit
/// (wrapping in y on cylinders).
pub fn fourth_difference_bound<T: Real>(f: &ScalarField<T>) -> (T, T) {
    let spec = f.spec();
    let w = [T::one(), c::<T>(-4.0), c::<T>(6.0), c::<T>(-4.0), T::one()];
    let (mut bx, mut by) = (T::zero(), T::zero());
    for (i, j) in spec.nodes() {
        if i >= 2 && i + 2 < spec.nx {
            let d: T = (0..5).map(|k| w[k] * f.at(i + k - 2, j)).sum();
            bx = bx.max(d.abs());
        }
        let js: Option<Vec<usize>> = (-2isize..=2).map(|d| spec.j_offset(j, d)).collect();
        if let Some(js) = js {
            let d: T = (0..5).map(|k| w[k] * f.at(i, js[k])).sum();
            by = by.max(d.abs());
        }
    }
    (bx / spec.hx.powi(4), by / spec.hy.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_f_shape() {
        let spec = GridSpec::<f64>::centered(20, 20, 0.05).unwrap();
        let f = build_point_f(&spec, (0.0, 0.0), 0.4).unwrap();
        let (i, j) = spec.nearest_node(0.0, 0.0);
        assert!((f.dxx(i, j) + 1.0).abs() < 1e-12 && (f.dyy(i, j) - 1.0).abs() < 1e-12);
        assert_eq!(f.at(0, 0), 0.0);
        assert!(matches!(build_point_f(&spec, (0.8, 0.0), 0.4), Err(DeformError::BallExceedsChart)));
    }

    #[test]
    fn point_f_wraps_on_cylinder() {
        let spec = GridSpec::<f64>::cylinder(-1.0, 1.0, 0.0, 1.0, 41, 20).unwrap();
        let f = build_point_f(&spec, (0.0, 0.0), 0.3).unwrap();
        let (i, _) = spec.nearest_node(0.0, 0.0);
        assert!((f.at(i, 2) - f.at(i, 18)).abs() < 1e-14);
        assert!(f.at(i, 2) > 0.0);
    }

    #[test]
    fn halfturn_tube_is_periodic() {
        let chart = CurveChart::<f64>::new(2.0, Holonomy::HalfTurn, [0.0; 2], vec![[0.4, 0.1]], vec![[0.05, 0.4]]).unwrap();
        let spec = GridSpec::cylinder(-0.1, 0.1, 0.0, 2.0, 21, 64).unwrap();
        let tube = TubeDeformation::new(chart.clone(), 0.08).unwrap();
        let f = tube.field(&spec).unwrap();
        assert!((tube.eval(0.3, 0.01) - tube.eval(2.3, 0.01)).abs() < 1e-14);
        assert!(f.values().iter().all(|v| v.is_finite()));
        let trans = CurveChart::new(2.0, Holonomy::Translation(1.0, 0.0), [0.0; 2], vec![], vec![]).unwrap();
        assert!(matches!(TubeDeformation::new(trans, 0.1), Err(DeformError::WrongHolonomyClass)));
    }

    #[test]
    fn overlapping_points_rejected() {
        let spec = GridSpec::<f64>::centered(20, 20, 0.05).unwrap();
        let s = SurfaceData::from_fn(spec, |x, y| ((x - 0.1).powi(2) + y * y) * ((x + 0.1).powi(2) + y * y)).unwrap();
        let z = detect_z(&s, 1e-10).unwrap();
        assert_eq!(z.len(), 2);
        assert!(matches!(assemble_f(&s, &z, 0.15), Err(DeformError::OverlappingNeighbourhoods)));
        assert!(assemble_f(&s, &z, 0.05).is_ok());
    }
}
