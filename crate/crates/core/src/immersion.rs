//! Realising flat-chart data as an actual surface in the hyperboloid model
//! `H³ = {⟨P, P⟩ = -1, t > 0}` of Minkowski space, moving it along normal geodesics,
//! and reading fundamental forms back off by finite differences.

use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{gauss_residual, SurfaceData};
use crate::grid::{diff_x, diff_y, GridError, GridSpec, Mat2, OperatorField, ScalarField};
use crate::scalar::{c, Real};

/// Tolerance of the hyperboloid constraints on a stored [`ImmersionGrid`].
pub const TOL_CONSTRAINT: f64 = 1e-9;
/// Drift allowed inside one integration step before projection.
pub const TOL_DRIFT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImmersionError {
    #[error("frame constraints drifted by {drift:.3e} at node ({i}, {j})")]
    ConstraintDrift { i: usize, j: usize, drift: f64 },
    #[error("hyperboloid constraints violated by {drift:.3e} at node ({i}, {j})")]
    ConstraintViolation { i: usize, j: usize, drift: f64 },
    #[error("finite-difference tangents are degenerate at node ({i}, {j})")]
    DegenerateTangents { i: usize, j: usize },
    #[error("first fundamental form is not positive definite at node ({i}, {j})")]
    SingularMetric { i: usize, j: usize },
    #[error("expected {expected} nodes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A vector `(t, x1, x2, x3)` of Minkowski space `ℝ^{3,1}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MinkowskiVec<T>(pub [T; 4]);

impl<T: Real> MinkowskiVec<T> {
    pub fn new(t: T, x1: T, x2: T, x3: T) -> Self {
        Self([t, x1, x2, x3])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 4])
    }

    /// Basis vector `E_k` (`E_0` is the time direction).
    pub fn basis(k: usize) -> Self {
        let mut v = [T::zero(); 4];
        v[k] = T::one();
        Self(v)
    }

    pub fn t(&self) -> T {
        self.0[0]
    }

    /// `⟨a, b⟩ = -a_t b_t + Σ a_i b_i`.
    pub fn dot(&self, o: &Self) -> T {
        -self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2] + self.0[3] * o.0[3]
    }

    pub fn sq(&self) -> T {
        self.dot(self)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn axpy(&self, a: T, x: &Self) -> Self {
        let mut r = self.0;
        for k in 0..4 {
            r[k] += a * x.0[k];
        }
        Self(r)
    }

    /// `Λ·v` for a 4×4 matrix in row-major order.
    pub fn transformed(&self, m: &[[T; 4]; 4]) -> Self {
        let mut r = [T::zero(); 4];
        for (k, row) in m.iter().enumerate() {
            r[k] = row.iter().zip(&self.0).fold(T::zero(), |s, (a, b)| s + *a * *b);
        }
        Self(r)
    }
}

impl<T: Real> Add for MinkowskiVec<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl<T: Real> Sub for MinkowskiVec<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2], self.0[3] - o.0[3]])
    }
}

impl<T: Real> Mul<T> for MinkowskiVec<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s, self.0[3] * s])
    }
}

impl<T: Real> Neg for MinkowskiVec<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -T::one()
    }
}

/// Positions and unit normals of a surface in `H³`, one pair per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionGrid<T> {
    spec: GridSpec<T>,
    sigma: Vec<MinkowskiVec<T>>,
    nu: Vec<MinkowskiVec<T>>,
}

/// Largest violation of `⟨σ,σ⟩ = -1`, `⟨ν,ν⟩ = 1`, `⟨σ,ν⟩ = 0`, together with
/// `-σ_t` (positive only on the wrong sheet).
fn node_drift<T: Real>(s: &MinkowskiVec<T>, n: &MinkowskiVec<T>) -> T {
    let a = (s.sq() + T::one()).abs();
    let b = (n.sq() - T::one()).abs();
    let d = s.dot(n).abs();
    let sheet = if s.t() > T::zero() { T::zero() } else { T::one() };
    a.max(b).max(d).max(sheet)
}

impl<T: Real> ImmersionGrid<T> {
    pub fn new(spec: GridSpec<T>, sigma: Vec<MinkowskiVec<T>>, nu: Vec<MinkowskiVec<T>>) -> Result<Self, ImmersionError> {
        for v in [&sigma, &nu] {
            if v.len() != spec.len() {
                return Err(ImmersionError::WrongLength { expected: spec.len(), got: v.len() });
            }
        }
        let g = Self { spec, sigma, nu };
        g.check(TOL_CONSTRAINT)?;
        Ok(g)
    }

    fn check(&self, tol: f64) -> Result<(), ImmersionError> {
        for k in 0..self.spec.len() {
            let d = node_drift(&self.sigma[k], &self.nu[k]);
            if !(d <= c::<T>(tol)) {
                let (i, j) = self.spec.ij(k);
                return Err(ImmersionError::ConstraintViolation { i, j, drift: d.as_f64() });
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn sigma(&self, i: usize, j: usize) -> MinkowskiVec<T> {
        self.sigma[self.spec.idx(i, j)]
    }

    pub fn nu(&self, i: usize, j: usize) -> MinkowskiVec<T> {
        self.nu[self.spec.idx(i, j)]
    }

    pub fn positions(&self) -> &[MinkowskiVec<T>] {
        &self.sigma
    }

    pub fn normals(&self) -> &[MinkowskiVec<T>] {
        &self.nu
    }

    /// Largest constraint violation over all nodes.
    pub fn constraint_drift(&self) -> T {
        self.sigma.iter().zip(&self.nu).fold(T::zero(), |m, (s, n)| m.max(node_drift(s, n)))
    }

    /// Apply an isometry of `H³` given as a Lorentz matrix (row-major, preserving the
    /// future sheet).
    pub fn transformed(&self, m: &[[T; 4]; 4]) -> Self {
        Self {
            spec: self.spec,
            sigma: self.sigma.iter().map(|v| v.transformed(m)).collect(),
            nu: self.nu.iter().map(|v| v.transformed(m)).collect(),
        }
    }
}

/// Moving frame `(σ, σ_x, σ_y, ν)` at one point.
#[derive(Debug, Clone, Copy)]
struct Frame<T> {
    s: MinkowskiVec<T>,
    sx: MinkowskiVec<T>,
    sy: MinkowskiVec<T>,
    n: MinkowskiVec<T>,
}

impl<T: Real> Frame<T> {
    fn axpy(&self, a: T, d: &Self) -> Self {
        Self { s: self.s.axpy(a, &d.s), sx: self.sx.axpy(a, &d.sx), sy: self.sy.axpy(a, &d.sy), n: self.n.axpy(a, &d.n) }
    }

    /// Violation of the hyperboloid constraints on position and normal.
    fn drift(&self) -> T {
        node_drift(&self.s, &self.n)
    }

    /// Nearest frame satisfying all constraints for conformal factor `e^{2u}`.
    fn project(&self, u: T) -> Self {
        let eu = u.exp();
        let s = self.s * (T::one() / (-self.s.sq()).sqrt());
        let n = self.n.axpy(self.n.dot(&s), &s);
        let n = n * (T::one() / n.sq().sqrt());
        let e1 = (self.sx * (T::one() / eu)).axpy(self.sx.dot(&s) / eu, &s);
        let e1 = e1.axpy(-e1.dot(&n), &n);
        let e1 = e1 * (T::one() / e1.sq().sqrt());
        let e2 = (self.sy * (T::one() / eu)).axpy(self.sy.dot(&s) / eu, &s);
        let e2 = e2.axpy(-e2.dot(&n), &n);
        let e2 = e2.axpy(-e2.dot(&e1), &e1);
        let e2 = e2 * (T::one() / e2.sq().sqrt());
        Self { s, sx: e1 * eu, sy: e2 * eu, n }
    }
}

#[derive(Debug, Clone, Copy)]
struct Coeffs<T> {
    u: T,
    ux: T,
    uy: T,
}

/// Derivative of the frame along x (or along y when `along_y`).
fn frame_rhs<T: Real>(f: &Frame<T>, k: Coeffs<T>, along_y: bool) -> Frame<T> {
    let e2 = (c::<T>(2.0) * k.u).exp();
    let em2 = T::one() / e2;
    let Coeffs { ux, uy, .. } = k;
    let mixed = f.sx * uy + f.sy * ux;
    if !along_y {
        Frame {
            s: f.sx,
            sx: f.sx * ux - f.sy * uy + f.n + f.s * e2,
            sy: mixed,
            n: f.sx * (-em2),
        }
    } else {
        Frame {
            s: f.sy,
            sx: mixed,
            sy: f.sy * uy - f.sx * ux - f.n + f.s * e2,
            n: f.sy * em2,
        }
    }
}

/// Coefficients along a line of nodes, with cubic Lagrange interpolation at the
/// half-way points needed by RK4.
struct Line<T> {
    c: Vec<Coeffs<T>>,
}

impl<T: Real> Line<T> {
    fn at(&self, k: usize) -> Coeffs<T> {
        self.c[k]
    }

    /// Value midway between nodes `k` and `k + 1`.
    fn mid(&self, k: usize) -> Coeffs<T> {
        let n = self.c.len();
        if n < 4 {
            let (a, b) = (self.c[k], self.c[k + 1]);
            let h = c::<T>(0.5);
            return Coeffs { u: (a.u + b.u) * h, ux: (a.ux + b.ux) * h, uy: (a.uy + b.uy) * h };
        }
        // stencil k-1..k+2 shifted inward at the ends; weights at the evaluation point
        let start = k.saturating_sub(1).min(n - 4);
        let t = c::<T>(k as f64 - start as f64 + 0.5);
        let mut w = [T::zero(); 4];
        for (a, wa) in w.iter_mut().enumerate() {
            let mut p = T::one();
            for b in 0..4 {
                if b != a {
                    p *= (t - T::from_usize_lossy(b)) / (T::from_usize_lossy(a) - T::from_usize_lossy(b));
                }
            }
            *wa = p;
        }
        let mut out = Coeffs { u: T::zero(), ux: T::zero(), uy: T::zero() };
        for (a, wa) in w.iter().enumerate() {
            let q = self.c[start + a];
            out.u += *wa * q.u;
            out.ux += *wa * q.ux;
            out.uy += *wa * q.uy;
        }
        out
    }
}

/// RK4 step of length `h` (negative to march backwards) from node `k` to its neighbour.
fn rk4<T: Real>(f: &Frame<T>, line: &Line<T>, k: usize, forward: bool, h: T, along_y: bool) -> Frame<T> {
    let (k0, k1, km) = if forward { (k, k + 1, k) } else { (k, k - 1, k - 1) };
    let c0 = line.at(k0);
    let cm = line.mid(km);
    let c1 = line.at(k1);
    let half = h * c::<T>(0.5);
    let d1 = frame_rhs(f, c0, along_y);
    let d2 = frame_rhs(&f.axpy(half, &d1), cm, along_y);
    let d3 = frame_rhs(&f.axpy(half, &d2), cm, along_y);
    let d4 = frame_rhs(&f.axpy(h, &d3), c1, along_y);
    let sixth = h / c::<T>(6.0);
    f.axpy(sixth, &d1).axpy(sixth * c::<T>(2.0), &d2).axpy(sixth * c::<T>(2.0), &d3).axpy(sixth, &d4)
}

/// Integration order of the frame system from the base node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PathOrder {
    /// Along the base row, then up and down every column.
    #[default]
    RowsFirst,
    /// Along the base column, then left and right along every row.
    ColumnsFirst,
}

/// March a frame through all nodes of one line starting at node `base`.
fn march_line<T: Real>(
    start: Frame<T>,
    line: &Line<T>,
    base: usize,
    h: T,
    along_y: bool,
    node_of: impl Fn(usize) -> (usize, usize),
) -> Result<Vec<Frame<T>>, ImmersionError> {
    let n = line.c.len();
    let mut out = vec![start; n];
    for forward in [true, false] {
        let mut f = start;
        let mut k = base;
        loop {
            let next = if forward { k + 1 } else { k.wrapping_sub(1) };
            if next >= n {
                break;
            }
            let step = if forward { h } else { -h };
            let raw = rk4(&f, line, k, forward, step, along_y);
            let cn = line.at(next);
            let d = raw.drift();
            if !(d <= c::<T>(TOL_DRIFT)) {
                let (i, j) = node_of(next);
                return Err(ImmersionError::ConstraintDrift { i, j, drift: d.as_f64() });
            }
            f = raw.project(cn.u);
            out[next] = f;
            k = next;
        }
    }
    Ok(out)
}

/// Integrate the Gauss–Weingarten system of `s` (rows first).
pub fn immerse<T: Real>(s: &SurfaceData<T>) -> Result<ImmersionGrid<T>, ImmersionError> {
    immerse_with_order(s, PathOrder::RowsFirst)
}

/// Integrate the frame system from the centre node, where
/// `σ = E₀, σ_x = e^u E₁, σ_y = e^u E₂, ν = E₃`.
///
/// The chart is developed: periodic y charts are integrated as plain rectangles,
/// since the immersion of a cylinder need not close up.
pub fn immerse_with_order<T: Real>(s: &SurfaceData<T>, order: PathOrder) -> Result<ImmersionGrid<T>, ImmersionError> {
    let spec = *s.spec();
    let res = gauss_residual(s).sup_norm();
    let scale = s.u.values().iter().fold(T::one(), |m, &u| m.max(c::<T>(2.0) * (c::<T>(2.0) * u).cosh()));
    let h = spec.h_max();
    if res > c::<T>(1e-4).max(h * h) * scale {
        log::warn!("immersing data with cosh-Gordon residual {res:e}; the frame system is not integrable");
    }
    let coeffs: Vec<Coeffs<T>> = spec
        .nodes()
        .map(|(i, j)| Coeffs { u: s.u.at(i, j), ux: s.u.dx(i, j), uy: dy_open(&s.u, i, j) })
        .collect();
    let at = |i: usize, j: usize| coeffs[spec.idx(i, j)];
    let (i0, j0) = (spec.nx / 2, spec.ny / 2);
    let c0 = at(i0, j0);
    let eu = c0.u.exp();
    let base = Frame {
        s: MinkowskiVec::basis(0),
        sx: MinkowskiVec::basis(1) * eu,
        sy: MinkowskiVec::basis(2) * eu,
        n: MinkowskiVec::basis(3),
    };
    let row = |j: usize| Line { c: (0..spec.nx).map(|i| at(i, j)).collect() };
    let col = |i: usize| Line { c: (0..spec.ny).map(|j| at(i, j)).collect() };
    let mut frames = vec![base; spec.len()];
    match order {
        PathOrder::RowsFirst => {
            let base_row = march_line(base, &row(j0), i0, spec.hx, false, |i| (i, j0))?;
            let cols: Result<Vec<_>, _> = (0..spec.nx)
                .into_par_iter()
                .map(|i| march_line(base_row[i], &col(i), j0, spec.hy, true, |j| (i, j)))
                .collect();
            for (i, column) in cols?.into_iter().enumerate() {
                for (j, f) in column.into_iter().enumerate() {
                    frames[spec.idx(i, j)] = f;
                }
            }
        }
        PathOrder::ColumnsFirst => {
            let base_col = march_line(base, &col(i0), j0, spec.hy, true, |j| (i0, j))?;
            let rows: Result<Vec<_>, _> = (0..spec.ny)
                .into_par_iter()
                .map(|j| march_line(base_col[j], &row(j), i0, spec.hx, false, |i| (i, j)))
                .collect();
            for (j, r) in rows?.into_iter().enumerate() {
                for (i, f) in r.into_iter().enumerate() {
                    frames[spec.idx(i, j)] = f;
                }
            }
        }
    }
    ImmersionGrid::new(spec, frames.iter().map(|f| f.s).collect(), frames.iter().map(|f| f.n).collect())
}

/// y-derivative of `u` that wraps on cylinders (u itself is periodic there).
fn dy_open<T: Real>(u: &ScalarField<T>, i: usize, j: usize) -> T {
    u.dy(i, j)
}

fn tangents<T: Real>(spec: &GridSpec<T>, v: &[MinkowskiVec<T>], i: usize, j: usize) -> (MinkowskiVec<T>, MinkowskiVec<T>) {
    let at = |i: usize, j: usize| v[spec.idx(i, j)];
    (diff_x(spec, i, j, at), diff_y(spec, i, j, false, at))
}

/// Move every point the signed distance `t·f` along its normal geodesic.
///
/// Normals of the moved surface come from its finite-difference tangents and are
/// oriented to agree with the old normals.
pub fn normal_flow<T: Real>(g: &ImmersionGrid<T>, f: &ScalarField<T>, t: T) -> Result<ImmersionGrid<T>, ImmersionError> {
    let spec = g.spec;
    if f.spec() != &spec {
        return Err(GridError::SpecMismatch.into());
    }
    let sigma: Vec<MinkowskiVec<T>> = spec
        .nodes()
        .map(|(i, j)| {
            let d = t * f.at(i, j);
            g.sigma(i, j) * d.cosh() + g.nu(i, j) * d.sinh()
        })
        .collect();
    let nu: Result<Vec<_>, _> = spec
        .nodes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| {
            let s = sigma[spec.idx(i, j)];
            let (tx, ty) = tangents(&spec, &sigma, i, j);
            let e1 = tx.axpy(tx.dot(&s), &s);
            let e2 = ty.axpy(ty.dot(&s), &s);
            let e2 = e2.axpy(-e2.dot(&e1) / e1.sq(), &e1);
            let (q1, q2) = (e1.sq(), e2.sq());
            if !(q1 > T::zero() && q2 > T::zero() && q1 * q2 > c::<T>(1e-12) * tx.sq().abs() * ty.sq().abs()) {
                return Err(ImmersionError::DegenerateTangents { i, j });
            }
            let old = g.nu(i, j);
            let n = old.axpy(old.dot(&s), &s);
            let n = n.axpy(-n.dot(&e1) / q1, &e1).axpy(-n.dot(&e2) / q2, &e2);
            let q = n.sq();
            if !(q > T::zero()) {
                return Err(ImmersionError::DegenerateTangents { i, j });
            }
            let n = n * (T::one() / q.sqrt());
            Ok(if n.dot(&old) < T::zero() { -n } else { n })
        })
        .collect();
    ImmersionGrid::new(spec, sigma, nu?)
}

/// First and second fundamental forms and shape operator of an immersion.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredForms<T> {
    pub first: OperatorField<T>,
    pub second: OperatorField<T>,
    pub shape: OperatorField<T>,
}

/// `I_ij = ⟨∂_iσ, ∂_jσ⟩`, `II_ij = -⟨∂_iν, ∂_jσ⟩` (symmetrised), `B = I⁻¹ II`, from
/// central differences (one-sided at the edges, never wrapping).
pub fn forms_from_immersion<T: Real>(g: &ImmersionGrid<T>) -> Result<RecoveredForms<T>, ImmersionError> {
    let spec = g.spec;
    let mut first = Vec::with_capacity(spec.len());
    let mut second = Vec::with_capacity(spec.len());
    let mut shape = Vec::with_capacity(spec.len());
    for (i, j) in spec.nodes() {
        let (sx, sy) = tangents(&spec, &g.sigma, i, j);
        let (nx, ny) = tangents(&spec, &g.nu, i, j);
        let metric = Mat2::sym(sx.dot(&sx), sx.dot(&sy), sy.dot(&sy));
        let off = -(nx.dot(&sy) + ny.dot(&sx)) * c::<T>(0.5);
        let ii = Mat2::sym(-nx.dot(&sx), off, -ny.dot(&sy));
        let inv = match metric.inverse() {
            Some(m) if metric.det() > T::zero() && metric.a11 > T::zero() => m,
            _ => return Err(ImmersionError::SingularMetric { i, j }),
        };
        first.push(metric);
        second.push(ii);
        shape.push(inv.mul(&ii));
    }
    Ok(RecoveredForms {
        first: OperatorField::new(spec, first)?,
        second: OperatorField::new(spec, second)?,
        shape: OperatorField::new(spec, shape)?,
    })
}

/// Shape operator of the parallel surface at signed distance `s`:
/// `(B - tanh s)(𝟙 - tanh s · B)⁻¹`.
pub fn equidistant_shape<T: Real>(b: &Mat2<T>, s: T) -> Option<Mat2<T>> {
    let th = s.tanh();
    let id = Mat2::identity();
    id.sub(&b.scale(th)).inverse().map(|inv| b.sub(&id.scale(th)).mul(&inv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minkowski_products() {
        let e0 = MinkowskiVec::<f64>::basis(0);
        let e2 = MinkowskiVec::<f64>::basis(2);
        assert_eq!(e0.sq(), -1.0);
        assert_eq!(e2.sq(), 1.0);
        assert_eq!(e0.dot(&e2), 0.0);
        let v = MinkowskiVec::new(2.0, 1.0, -1.0, 3.0);
        assert_eq!(v.sq(), -4.0 + 1.0 + 1.0 + 9.0);
        assert_eq!((v - v).sq(), 0.0);
    }

    #[test]
    fn constructor_rejects_off_hyperboloid() {
        let s = GridSpec::<f64>::rectangle(0.0, 1.0, 0.0, 1.0, 3, 3).unwrap();
        let sigma = vec![MinkowskiVec::new(1.5, 0.0, 0.0, 0.0); 9];
        let nu = vec![MinkowskiVec::basis(3); 9];
        assert!(matches!(ImmersionGrid::new(s, sigma, nu), Err(ImmersionError::ConstraintViolation { .. })));
    }

    #[test]
    fn projection_is_identity_on_valid_frames() {
        let u = 0.3f64;
        let eu = u.exp();
        let f = Frame {
            s: MinkowskiVec::basis(0),
            sx: MinkowskiVec::basis(1) * eu,
            sy: MinkowskiVec::basis(2) * eu,
            n: MinkowskiVec::basis(3),
        };
        assert!(f.drift() < 1e-15);
        let p = f.project(u);
        assert!((p.sx - f.sx).sq().abs() < 1e-28);
        assert!((p.sy - f.sy).sq().abs() < 1e-28);
    }

    #[test]
    fn lagrange_midpoint_exact_on_cubics() {
        let line = Line {
            c: (0..6)
                .map(|k| {
                    let x = k as f64;
                    Coeffs { u: x * x * x - 2.0 * x, ux: x, uy: 1.0 }
                })
                .collect(),
        };
        for k in 0..5 {
            let x = k as f64 + 0.5;
            let m = line.mid(k);
            assert!((m.u - (x * x * x - 2.0 * x)).abs() < 1e-12);
            assert!((m.ux - x).abs() < 1e-12);
        }
    }

    #[test]
    fn equidistant_of_zero_distance() {
        let b = Mat2::diag(0.7f64, -0.7);
        assert_eq!(equidistant_shape(&b, 0.0).unwrap(), b);
    }
}
