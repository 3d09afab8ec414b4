//! Newton solver for the Dirichlet problem `Δu = 2cosh(2u)` on rectangles and
//! cylinders, discretised with the 5-point Laplacian.

use serde::Serialize;
use thiserror::Error;

use crate::banded::{default_pivot_tol, SymBand, SymBandFactor};
use crate::geometry::{gauss_residual, SurfaceData};
use crate::grid::{GridError, GridSpec, ScalarField};
use crate::invariant_ode::{estimate_delta, integrate, OdeError, OdeSettings};
use crate::scalar::{c, Real};

/// Smallest damping factor tried by the backtracking search.
pub const DAMPING_FLOOR: f64 = 1.0 / 1024.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("Newton iteration diverged at iteration {iter} (residual {residual:.3e})")]
    NewtonDiverged { iter: usize, residual: f64 },
    #[error("Jacobian factorisation broke down at unknown {index}")]
    SingularJacobian { index: usize },
    #[error("damping must lie in (0, 1], got {0}")]
    BadDamping(f64),
    #[error("continuation widths must be positive and strictly increasing")]
    BadWidths,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonSettings<T> {
    pub tol_residual: T,
    pub max_iter: usize,
    pub damping: T,
}

impl<T: Real> Default for NewtonSettings<T> {
    fn default() -> Self {
        Self { tol_residual: c(1e-10), max_iter: 50, damping: T::one() }
    }
}

/// Dirichlet data live on the boundary nodes of `boundary`; its interior values are
/// ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem<T> {
    pub boundary: ScalarField<T>,
    /// Harmonic extension of the boundary data when absent.
    pub initial_guess: Option<ScalarField<T>>,
    pub newton: NewtonSettings<T>,
}

impl<T: Real> PdeProblem<T> {
    pub fn new(boundary: ScalarField<T>) -> Self {
        Self { boundary, initial_guess: None, newton: NewtonSettings::default() }
    }

    pub fn spec(&self) -> &GridSpec<T> {
        self.boundary.spec()
    }

    /// Strip `[-width/2, width/2] × (ℝ / ny·h)` with the boundary value of the
    /// invariant solution `g(width/2)` for Cauchy value `v0`.
    ///
    /// Past the maximal half-width the boundary value is frozen at `g(0.99·δ)`, which
    /// keeps the data finite while no solution exists.
    pub fn invariant_strip(v0: T, width: T, h: T, ny: usize) -> Result<Self, PdeError> {
        let half = width / c::<T>(2.0);
        let spec = strip_spec(half, h, ny)?;
        let value = invariant_boundary_value(v0, half)?;
        Ok(Self::new(ScalarField::constant(spec, value)))
    }
}

/// Cylinder `[-half, half] × (ℝ / ny·h)` whose x-spacing is the closest divisor of
/// `half` to `h`.
pub fn strip_spec<T: Real>(half: T, h: T, ny: usize) -> Result<GridSpec<T>, GridError> {
    let n = (half / h).round().max(T::one());
    let hx = half / n;
    let nx = 2 * n.to_usize().unwrap_or(1) + 1;
    GridSpec::new(nx, ny, hx, h, (-half, T::zero()), true)
}

/// `g(min(x, 0.99·δ(v0)))` for the invariant solution with Cauchy value `v0`.
pub fn invariant_boundary_value<T: Real>(v0: T, x: T) -> Result<T, PdeError> {
    let delta = estimate_delta(v0)?;
    let x = x.abs().min(c::<T>(0.99) * delta);
    if x == T::zero() {
        return Ok(v0);
    }
    let sol = integrate(v0, x, &OdeSettings::with_tol(c(1e-12)))?;
    Ok(sol.eval(x).expect("endpoint inside range").0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonReport<T> {
    pub iterations: usize,
    /// Sup-norm residual before the first step and after every accepted step.
    pub residual_history: Vec<T>,
    pub damping_history: Vec<T>,
}

impl<T: Real> NewtonReport<T> {
    pub fn final_residual(&self) -> T {
        *self.residual_history.last().expect("history starts with the initial residual")
    }
}

/// Unknown numbering: interior nodes, with the shorter direction running fastest so
/// that the Jacobian bandwidth is minimal.
struct Layout {
    index: Vec<Option<usize>>,
    nodes: Vec<(usize, usize)>,
    bandwidth: usize,
}

impl Layout {
    fn new<T: Real>(s: &GridSpec<T>) -> Self {
        let mut index = vec![None; s.len()];
        let mut nodes = Vec::new();
        let (i_range, j_range) = if s.periodic_y { (1..s.nx - 1, 0..s.ny) } else { (1..s.nx - 1, 1..s.ny - 1) };
        let y_fast = s.periodic_y || j_range.len() <= i_range.len();
        if y_fast {
            for i in i_range.clone() {
                for j in j_range.clone() {
                    index[s.idx(i, j)] = Some(nodes.len());
                    nodes.push((i, j));
                }
            }
        } else {
            for j in j_range.clone() {
                for i in i_range.clone() {
                    index[s.idx(i, j)] = Some(nodes.len());
                    nodes.push((i, j));
                }
            }
        }
        let bandwidth = if y_fast { j_range.len() } else { i_range.len() };
        Self { index, nodes, bandwidth }
    }
}

fn node_residual<T: Real>(u: &ScalarField<T>, i: usize, j: usize) -> T {
    u.laplacian(i, j) - c::<T>(2.0) * (c::<T>(2.0) * u.at(i, j)).cosh()
}

fn residual_vector<T: Real>(u: &ScalarField<T>, layout: &Layout, forcing: bool) -> Vec<T> {
    layout
        .nodes
        .iter()
        .map(|&(i, j)| if forcing { node_residual(u, i, j) } else { u.laplacian(i, j) })
        .collect()
}

fn sup<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| if x.is_finite() { m.max(x.abs()) } else { T::infinity() })
}

/// Factor `-J = -Δ_h + shift(u)`, where `shift = 4sinh(2u)` (or zero for the
/// harmonic problem).
fn factor_jacobian<T: Real>(u: &ScalarField<T>, layout: &Layout, forcing: bool) -> Result<SymBandFactor<T>, PdeError> {
    let s = u.spec();
    let ax = T::one() / (s.hx * s.hx);
    let ay = T::one() / (s.hy * s.hy);
    let mut m = SymBand::zeros(layout.nodes.len(), layout.bandwidth);
    for (k, &(i, j)) in layout.nodes.iter().enumerate() {
        let shift = if forcing { c::<T>(4.0) * (c::<T>(2.0) * u.at(i, j)).sinh() } else { T::zero() };
        m.add(k, k, c::<T>(2.0) * (ax + ay) + shift);
        let mut couple = |ii: usize, jj: usize, a: T| {
            if let Some(kn) = layout.index[s.idx(ii, jj)] {
                if kn < k {
                    m.add(k, kn, -a);
                }
            }
        };
        couple(i - 1, j, ax);
        couple(i + 1, j, ax);
        for d in [-1isize, 1] {
            if let Some(jj) = s.j_offset(j, d) {
                couple(i, jj, ay);
            }
        }
    }
    m.factor(default_pivot_tol()).map_err(|index| PdeError::SingularJacobian { index })
}

fn with_boundary<T: Real>(guess: &ScalarField<T>, boundary: &ScalarField<T>, layout: &Layout) -> Result<ScalarField<T>, PdeError> {
    if guess.spec() != boundary.spec() {
        return Err(GridError::SpecMismatch.into());
    }
    let vals = guess
        .values()
        .iter()
        .zip(boundary.values())
        .zip(&layout.index)
        .map(|((&g, &b), k)| if k.is_some() { g } else { b })
        .collect();
    Ok(ScalarField::new(*guess.spec(), vals)?)
}

fn apply_step<T: Real>(u: &ScalarField<T>, layout: &Layout, delta: &[T], lam: T) -> Option<ScalarField<T>> {
    let mut vals = u.values().to_vec();
    for (&(i, j), d) in layout.nodes.iter().zip(delta) {
        vals[u.spec().idx(i, j)] += lam * *d;
    }
    ScalarField::new(*u.spec(), vals).ok()
}

/// Discrete harmonic function with the boundary values of `boundary`.
pub fn harmonic_extension<T: Real>(boundary: &ScalarField<T>) -> Result<ScalarField<T>, PdeError> {
    let layout = Layout::new(boundary.spec());
    let u = with_boundary(&ScalarField::zeros(*boundary.spec()), boundary, &layout)?;
    let mut rhs = residual_vector(&u, &layout, false);
    factor_jacobian(&u, &layout, false)?.solve(&mut rhs);
    apply_step(&u, &layout, &rhs, T::one()).ok_or(PdeError::NewtonDiverged { iter: 0, residual: f64::INFINITY })
}

pub fn solve<T: Real>(p: &PdeProblem<T>) -> Result<SurfaceData<T>, PdeError> {
    solve_with_report(p).map(|(s, _)| s)
}

/// Damped Newton iteration. Each accepted step strictly decreases the sup-norm
/// residual; a step is halved down to [`DAMPING_FLOOR`] before giving up.
pub fn solve_with_report<T: Real>(p: &PdeProblem<T>) -> Result<(SurfaceData<T>, NewtonReport<T>), PdeError> {
    let settings = p.newton;
    if !(settings.damping > T::zero() && settings.damping <= T::one()) {
        return Err(PdeError::BadDamping(settings.damping.as_f64()));
    }
    let layout = Layout::new(p.spec());
    let guess = match &p.initial_guess {
        Some(g) => g.clone(),
        None => harmonic_extension(&p.boundary)?,
    };
    let mut u = with_boundary(&guess, &p.boundary, &layout)?;
    let mut f = residual_vector(&u, &layout, true);
    let mut r = sup(&f);
    let mut report = NewtonReport { iterations: 0, residual_history: vec![r], damping_history: Vec::new() };
    let floor = c::<T>(DAMPING_FLOOR);
    while !(r <= settings.tol_residual) {
        if report.iterations >= settings.max_iter || !r.is_finite() {
            return Err(PdeError::NewtonDiverged { iter: report.iterations, residual: r.as_f64() });
        }
        report.iterations += 1;
        let jac = factor_jacobian(&u, &layout, true)?;
        let mut delta = f.clone();
        jac.solve(&mut delta);
        let mut lam = settings.damping;
        loop {
            if let Some(trial) = apply_step(&u, &layout, &delta, lam) {
                let ft = residual_vector(&trial, &layout, true);
                let rt = sup(&ft);
                if rt < r {
                    u = trial;
                    f = ft;
                    r = rt;
                    break;
                }
            }
            lam = lam / c::<T>(2.0);
            if lam < floor {
                return Err(PdeError::NewtonDiverged { iter: report.iterations, residual: r.as_f64() });
            }
        }
        log::debug!("newton iteration {}: residual {:e}, damping {}", report.iterations, r, lam);
        report.residual_history.push(r);
        report.damping_history.push(lam);
    }
    Ok((SurfaceData::new(u), report))
}

/// Sup-norm of the discrete cosh-Gordon residual over interior nodes.
pub fn residual<T: Real>(s: &SurfaceData<T>) -> T {
    gauss_residual(s).sup_norm()
}

#[derive(Debug, Clone)]
pub struct ContinuationReport<T> {
    /// Converged widths and their solutions, in order.
    pub solutions: Vec<(T, SurfaceData<T>)>,
    /// First width where Newton failed, with the failure.
    pub diverged: Option<(T, PdeError)>,
}

impl<T: Real> ContinuationReport<T> {
    pub fn last_good_width(&self) -> Option<T> {
        self.solutions.last().map(|(w, _)| *w)
    }
}

/// Solve invariant-strip problems of increasing width, seeding every solve with the
/// previous solution stretched to the new width. Stops at the first divergence.
pub fn continuation<T: Real>(
    v0: T,
    widths: &[T],
    h: T,
    ny: usize,
    newton: NewtonSettings<T>,
) -> Result<ContinuationReport<T>, PdeError> {
    if widths.iter().any(|w| !(*w > T::zero())) || widths.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PdeError::BadWidths);
    }
    let mut out = ContinuationReport { solutions: Vec::new(), diverged: None };
    for &w in widths {
        let mut p = PdeProblem::invariant_strip(v0, w, h, ny)?;
        p.newton = newton;
        if let Some((_, prev)) = out.solutions.last() {
            p.initial_guess = Some(stretch(&prev.u, p.spec())?);
        }
        match solve(&p) {
            Ok(s) => out.solutions.push((w, s)),
            Err(e @ PdeError::NewtonDiverged { .. }) => {
                out.diverged = Some((w, e));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Resample `u` onto `target` after scaling x so that the x-ranges coincide
/// (linear interpolation in x, same y nodes).
fn stretch<T: Real>(u: &ScalarField<T>, target: &GridSpec<T>) -> Result<ScalarField<T>, PdeError> {
    let src = u.spec();
    if src.ny != target.ny {
        return Err(GridError::SpecMismatch.into());
    }
    let (b0, b1) = target.x_range();
    let mut vals = Vec::with_capacity(target.len());
    for (i, j) in target.nodes() {
        let t = (target.x(i) - b0) / (b1 - b0);
        let pos = t * T::from_usize_lossy(src.nx - 1);
        let k = pos.floor().to_usize().unwrap_or(0).min(src.nx - 2);
        let w = pos - T::from_usize_lossy(k);
        vals.push(u.at(k, j) * (T::one() - w) + u.at(k + 1, j) * w);
    }
    Ok(ScalarField::new(*target, vals)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_orders_short_side_fast() {
        let s = GridSpec::<f64>::rectangle(0.0, 1.0, 0.0, 1.0, 10, 5).unwrap();
        let l = Layout::new(&s);
        assert_eq!(l.nodes.len(), 8 * 3);
        assert_eq!(l.bandwidth, 3);
        assert_eq!(l.nodes[1], (1, 2));
        let s = GridSpec::<f64>::cylinder(0.0, 1.0, 0.0, 1.0, 6, 4).unwrap();
        let l = Layout::new(&s);
        assert_eq!(l.nodes.len(), 4 * 4);
        assert_eq!(l.bandwidth, 4);
    }

    #[test]
    fn harmonic_extension_reproduces_linear_data() {
        let s = GridSpec::<f64>::rectangle(0.0, 1.0, 0.0, 2.0, 7, 9).unwrap();
        let lin = ScalarField::from_fn(s, |x, y| 1.0 + 2.0 * x - 0.5 * y).unwrap();
        let h = harmonic_extension(&lin).unwrap();
        for (a, b) in h.values().iter().zip(lin.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strip_spec_hits_half_width() {
        let s = strip_spec(0.3f64, 0.07, 4).unwrap();
        assert_eq!(s.x_range(), (-0.3, s.x(s.nx - 1)));
        assert!((s.x(s.nx - 1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn converges_on_small_square() {
        let s = GridSpec::<f64>::rectangle(0.0, 0.2, 0.0, 0.2, 9, 9).unwrap();
        let (sol, rep) = solve_with_report(&PdeProblem::new(ScalarField::constant(s, 0.3))).unwrap();
        assert!(residual(&sol) <= 1e-10);
        assert!(rep.residual_history.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(sol.u.at(0, 4), 0.3);
    }

    #[test]
    fn rejects_bad_widths() {
        let n = NewtonSettings::default();
        assert!(matches!(continuation(0.0f64, &[0.4, 0.2], 0.05, 4, n), Err(PdeError::BadWidths)));
        let r = continuation(0.0f64, &[], 0.05, 4, n).unwrap();
        assert!(r.solutions.is_empty() && r.diverged.is_none());
    }
}
