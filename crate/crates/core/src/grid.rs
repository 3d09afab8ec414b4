//! Uniform rectangular grids in flat coordinates and the fields sampled on them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{c, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3x3 nodes, got {nx}x{ny}")]
    TooFewNodes { nx: usize, ny: usize },
    #[error("grid spacings must be positive and finite (hx = {hx}, hy = {hy})")]
    BadSpacing { hx: f64, hy: f64 },
    #[error("expected {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite value {value} at node ({i}, {j})")]
    NonFinite { i: usize, j: usize, value: f64 },
    #[error("grids differ")]
    SpecMismatch,
}

/// Node layout of a flat chart. Node `(i, j)` sits at `origin + (i·hx, j·hy)`.
///
/// With `periodic_y` the chart is a cylinder: `y ~ y + ny·hy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub nx: usize,
    pub ny: usize,
    pub hx: T,
    pub hy: T,
    pub origin: (T, T),
    pub periodic_y: bool,
}

impl<T: Real> GridSpec<T> {
    pub fn new(nx: usize, ny: usize, hx: T, hy: T, origin: (T, T), periodic_y: bool) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::TooFewNodes { nx, ny });
        }
        if !(hx > T::zero() && hy > T::zero() && hx.is_finite() && hy.is_finite()) {
            return Err(GridError::BadSpacing { hx: hx.as_f64(), hy: hy.as_f64() });
        }
        Ok(Self { nx, ny, hx, hy, origin, periodic_y })
    }

    /// Square-celled grid covering `[x0, x1] × [y0, y1]` with `nx × ny` nodes.
    pub fn rectangle(x0: T, x1: T, y0: T, y1: T, nx: usize, ny: usize) -> Result<Self, GridError> {
        let hx = (x1 - x0) / T::from_usize_lossy(nx.saturating_sub(1).max(1));
        let hy = (y1 - y0) / T::from_usize_lossy(ny.saturating_sub(1).max(1));
        Self::new(nx, ny, hx, hy, (x0, y0), false)
    }

    /// Cylinder `[x0, x1] × (ℝ / period)` with `ny` nodes around the period.
    pub fn cylinder(x0: T, x1: T, y0: T, period: T, nx: usize, ny: usize) -> Result<Self, GridError> {
        let hx = (x1 - x0) / T::from_usize_lossy(nx.saturating_sub(1).max(1));
        let hy = period / T::from_usize_lossy(ny.max(1));
        Self::new(nx, ny, hx, hy, (x0, y0), true)
    }

    /// Symmetric grid `[-half_x, half_x] × [-half_y, half_y]` where both half widths are
    /// integer multiples of `h`, so that the axes are grid lines.
    pub fn centered(half_nodes_x: usize, half_nodes_y: usize, h: T) -> Result<Self, GridError> {
        let nx = 2 * half_nodes_x + 1;
        let ny = 2 * half_nodes_y + 1;
        let hx = T::from_usize_lossy(half_nodes_x) * h;
        let hy = T::from_usize_lossy(half_nodes_y) * h;
        Self::new(nx, ny, h, h, (-hx, -hy), false)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.origin.0 + T::from_usize_lossy(i) * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> T {
        self.origin.1 + T::from_usize_lossy(j) * self.hy
    }

    #[inline]
    pub fn xy(&self, i: usize, j: usize) -> (T, T) {
        (self.x(i), self.y(j))
    }

    /// Period of the cylinder, if any.
    pub fn period_y(&self) -> Option<T> {
        self.periodic_y.then(|| T::from_usize_lossy(self.ny) * self.hy)
    }

    pub fn h_max(&self) -> T {
        self.hx.max(self.hy)
    }

    pub fn x_range(&self) -> (T, T) {
        (self.x(0), self.x(self.nx - 1))
    }

    pub fn y_range(&self) -> (T, T) {
        match self.period_y() {
            Some(p) => (self.origin.1, self.origin.1 + p),
            None => (self.y(0), self.y(self.ny - 1)),
        }
    }

    /// Nodes where the 5-point stencil is available.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        let x_ok = i > 0 && i + 1 < self.nx;
        let y_ok = self.periodic_y || (j > 0 && j + 1 < self.ny);
        x_ok && y_ok
    }

    /// Nodes at distance at least `margin` (in nodes) from every non-periodic edge.
    pub fn is_inner(&self, i: usize, j: usize, margin: usize) -> bool {
        let x_ok = i >= margin && i + margin < self.nx;
        let y_ok = self.periodic_y || (j >= margin && j + margin < self.ny);
        x_ok && y_ok
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inner_nodes(1)
    }

    pub fn inner_nodes(&self, margin: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j))).filter(move |&(i, j)| self.is_inner(i, j, margin))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j)))
    }

    /// The same chart with every spacing halved (node counts refined accordingly).
    pub fn refined(&self) -> Self {
        let two = c::<T>(2.0);
        let ny = if self.periodic_y { 2 * self.ny } else { 2 * self.ny - 1 };
        Self { nx: 2 * self.nx - 1, ny, hx: self.hx / two, hy: self.hy / two, ..*self }
    }

    /// Node of the grid closest to `(x, y)`.
    pub fn nearest_node(&self, x: T, y: T) -> (usize, usize) {
        let fi = ((x - self.origin.0) / self.hx).round();
        let fj = ((y - self.origin.1) / self.hy).round();
        let i = fi.max(T::zero()).to_usize().unwrap_or(0).min(self.nx - 1);
        let j = if self.periodic_y {
            let n = self.ny as i64;
            let jj = fj.to_i64().unwrap_or(0);
            jj.rem_euclid(n) as usize
        } else {
            fj.max(T::zero()).to_usize().unwrap_or(0).min(self.ny - 1)
        };
        (i, j)
    }

    /// Wrapped y-neighbour index, `None` past a non-periodic edge.
    #[inline]
    pub fn j_offset(&self, j: usize, d: isize) -> Option<usize> {
        let jj = j as isize + d;
        if self.periodic_y {
            Some(jj.rem_euclid(self.ny as isize) as usize)
        } else if jj < 0 || jj >= self.ny as isize {
            None
        } else {
            Some(jj as usize)
        }
    }
}

/// Real values on the nodes of a [`GridSpec`], stored row-major (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    spec: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(spec: GridSpec<T>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != spec.len() {
            return Err(GridError::WrongLength { expected: spec.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = spec.ij(k);
            return Err(GridError::NonFinite { i, j, value: values[k].as_f64() });
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec<T>) -> Self {
        Self { spec, values: vec![T::zero(); spec.len()] }
    }

    pub fn constant(spec: GridSpec<T>, v: T) -> Self {
        Self { spec, values: vec![v; spec.len()] }
    }

    /// Sample `f(x, y)` at every node. Fails if `f` produces a non-finite value.
    pub fn from_fn(spec: GridSpec<T>, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        let values = spec.nodes().map(|(i, j)| f(spec.x(i), spec.y(j))).collect();
        Self::new(spec, values)
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.spec.idx(i, j)]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.spec.idx(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self, GridError> {
        Self::new(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        if self.spec != other.spec {
            return Err(GridError::SpecMismatch);
        }
        Self::new(self.spec, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Sup norm over nodes at least `margin` nodes away from the non-periodic edges.
    pub fn sup_norm_inner(&self, margin: usize) -> T {
        self.spec.inner_nodes(margin).fold(T::zero(), |m, (i, j)| m.max(self.at(i, j).abs()))
    }

    /// Central first difference in x; second-order one-sided at the x edges.
    pub fn dx(&self, i: usize, j: usize) -> T {
        diff_x(&self.spec, i, j, |i, j| self.at(i, j))
    }

    /// Central first difference in y (wrapping on cylinders); one-sided at the y edges.
    pub fn dy(&self, i: usize, j: usize) -> T {
        diff_y(&self.spec, i, j, self.spec.periodic_y, |i, j| self.at(i, j))
    }

    pub fn dxx(&self, i: usize, j: usize) -> T {
        let s = &self.spec;
        let (a, b, cc) = if i == 0 {
            (0, 1, 2)
        } else if i + 1 == s.nx {
            (i - 2, i - 1, i)
        } else {
            (i - 1, i, i + 1)
        };
        (self.at(a, j) - c::<T>(2.0) * self.at(b, j) + self.at(cc, j)) / (s.hx * s.hx)
    }

    pub fn dyy(&self, i: usize, j: usize) -> T {
        let s = &self.spec;
        let (a, b, cc) = match (s.j_offset(j, -1), s.j_offset(j, 1)) {
            (Some(a), Some(b)) => (a, j, b),
            (None, _) => (j, j + 1, j + 2),
            (_, None) => (j - 2, j - 1, j),
        };
        (self.at(i, a) - c::<T>(2.0) * self.at(i, b) + self.at(i, cc)) / (s.hy * s.hy)
    }

    /// Mixed difference from the four diagonal neighbours (edges fall back to
    /// nested one-sided differences).
    pub fn dxy(&self, i: usize, j: usize) -> T {
        let s = &self.spec;
        let interior_x = i > 0 && i + 1 < s.nx;
        match (interior_x, s.j_offset(j, -1), s.j_offset(j, 1)) {
            (true, Some(jm), Some(jp)) => {
                (self.at(i + 1, jp) - self.at(i + 1, jm) - self.at(i - 1, jp) + self.at(i - 1, jm))
                    / (c::<T>(4.0) * s.hx * s.hy)
            }
            _ => diff_x(s, i, j, |ii, jj| self.dy(ii, jj)),
        }
    }

    /// Five-point Laplacian.
    pub fn laplacian(&self, i: usize, j: usize) -> T {
        self.dxx(i, j) + self.dyy(i, j)
    }
}

/// First x-derivative of a node function, central in the interior.
pub(crate) fn diff_x<T: Real, V>(s: &GridSpec<T>, i: usize, j: usize, f: impl Fn(usize, usize) -> V) -> V
where
    V: std::ops::Sub<Output = V> + std::ops::Add<Output = V> + std::ops::Mul<T, Output = V>,
{
    let two_h = c::<T>(2.0) * s.hx;
    if i == 0 {
        (f(0, j) * c::<T>(-3.0) + f(1, j) * c::<T>(4.0) - f(2, j)) * (T::one() / two_h)
    } else if i + 1 == s.nx {
        (f(i, j) * c::<T>(3.0) - f(i - 1, j) * c::<T>(4.0) + f(i - 2, j)) * (T::one() / two_h)
    } else {
        (f(i + 1, j) - f(i - 1, j)) * (T::one() / two_h)
    }
}

/// First y-derivative of a node function; `wrap` selects periodic differencing.
pub(crate) fn diff_y<T: Real, V>(
    s: &GridSpec<T>,
    i: usize,
    j: usize,
    wrap: bool,
    f: impl Fn(usize, usize) -> V,
) -> V
where
    V: std::ops::Sub<Output = V> + std::ops::Add<Output = V> + std::ops::Mul<T, Output = V>,
{
    let two_h = c::<T>(2.0) * s.hy;
    if wrap && s.periodic_y {
        let jm = s.j_offset(j, -1).unwrap();
        let jp = s.j_offset(j, 1).unwrap();
        return (f(i, jp) - f(i, jm)) * (T::one() / two_h);
    }
    if j == 0 {
        (f(i, 0) * c::<T>(-3.0) + f(i, 1) * c::<T>(4.0) - f(i, 2)) * (T::one() / two_h)
    } else if j + 1 == s.ny {
        (f(i, j) * c::<T>(3.0) - f(i, j - 1) * c::<T>(4.0) + f(i, j - 2)) * (T::one() / two_h)
    } else {
        (f(i, j + 1) - f(i, j - 1)) * (T::one() / two_h)
    }
}

/// A 2×2 real matrix `[[a11, a12], [a21, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2<T> {
    pub a11: T,
    pub a12: T,
    pub a21: T,
    pub a22: T,
}

impl<T: Real> Mat2<T> {
    pub fn new(a11: T, a12: T, a21: T, a22: T) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn diag(a: T, b: T) -> Self {
        Self::new(a, T::zero(), T::zero(), b)
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one())
    }

    pub fn zero() -> Self {
        Self::diag(T::zero(), T::zero())
    }

    pub fn sym(a11: T, a12: T, a22: T) -> Self {
        Self::new(a11, a12, a12, a22)
    }

    pub fn trace(&self) -> T {
        self.a11 + self.a22
    }

    pub fn det(&self) -> T {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        Some(Self::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-T::one()))
    }

    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    /// Bilinear form `vᵀ A w`.
    pub fn form(&self, v: [T; 2], w: [T; 2]) -> T {
        let aw = self.apply(w);
        v[0] * aw[0] + v[1] * aw[1]
    }

    pub fn max_abs(&self) -> T {
        self.a11.abs().max(self.a12.abs()).max(self.a21.abs()).max(self.a22.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn symmetrized(&self) -> Self {
        let m = (self.a12 + self.a21) * c::<T>(0.5);
        Self::new(self.a11, m, m, self.a22)
    }
}

/// A 2×2 operator (or 2-tensor) per node.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorField<T> {
    spec: GridSpec<T>,
    values: Vec<Mat2<T>>,
}

impl<T: Real> OperatorField<T> {
    pub fn new(spec: GridSpec<T>, values: Vec<Mat2<T>>) -> Result<Self, GridError> {
        if values.len() != spec.len() {
            return Err(GridError::WrongLength { expected: spec.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|m| !m.is_finite()) {
            let (i, j) = spec.ij(k);
            return Err(GridError::NonFinite { i, j, value: values[k].max_abs().as_f64() });
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec<T>, f: impl Fn(usize, usize) -> Mat2<T>) -> Result<Self, GridError> {
        let values = spec.nodes().map(|(i, j)| f(i, j)).collect();
        Self::new(spec, values)
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Mat2<T> {
        self.values[self.spec.idx(i, j)]
    }

    pub fn values(&self) -> &[Mat2<T>] {
        &self.values
    }

    /// Largest entrywise deviation from another field over nodes `margin` away from the edges.
    pub fn sup_diff_inner(&self, other: &Self, margin: usize) -> T {
        self.spec
            .inner_nodes(margin)
            .fold(T::zero(), |m, (i, j)| m.max(self.at(i, j).sub(&other.at(i, j)).max_abs()))
    }

    /// Largest asymmetry `|a12 - a21|` over all nodes.
    pub fn asymmetry(&self) -> T {
        self.values.iter().fold(T::zero(), |m, a| m.max((a.a12 - a.a21).abs()))
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(&Mat2<T>, &Mat2<T>) -> Mat2<T>) -> Result<Self, GridError> {
        if self.spec != other.spec {
            return Err(GridError::SpecMismatch);
        }
        Self::new(self.spec, self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect())
    }

    pub fn map(&self, f: impl Fn(&Mat2<T>) -> Mat2<T>) -> Result<Self, GridError> {
        Self::new(self.spec, self.values.iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_specs() {
        assert!(matches!(GridSpec::<f64>::new(2, 5, 0.1, 0.1, (0.0, 0.0), false), Err(GridError::TooFewNodes { .. })));
        assert!(matches!(GridSpec::<f64>::new(4, 5, 0.0, 0.1, (0.0, 0.0), false), Err(GridError::BadSpacing { .. })));
    }

    #[test]
    fn rejects_nan() {
        let s = GridSpec::<f64>::rectangle(0.0, 1.0, 0.0, 1.0, 3, 3).unwrap();
        let mut v = vec![0.0; 9];
        v[4] = f64::NAN;
        assert!(matches!(ScalarField::new(s, v), Err(GridError::NonFinite { i: 1, j: 1, .. })));
    }

    #[test]
    fn differences_of_quadratic_are_exact() {
        let s = GridSpec::<f64>::rectangle(-1.0, 1.0, -1.0, 1.0, 9, 7).unwrap();
        let f = ScalarField::from_fn(s, |x, y| 3.0 * x * x - x * y + 0.5 * y * y + x - 2.0 * y).unwrap();
        for (i, j) in s.nodes() {
            let (x, y) = s.xy(i, j);
            assert!((f.dx(i, j) - (6.0 * x - y + 1.0)).abs() < 1e-12);
            assert!((f.dy(i, j) - (-x + y - 2.0)).abs() < 1e-12);
            assert!((f.dxx(i, j) - 6.0).abs() < 1e-10);
            assert!((f.dyy(i, j) - 1.0).abs() < 1e-10);
            assert!((f.dxy(i, j) + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_differences_wrap() {
        let p = std::f64::consts::TAU;
        let s = GridSpec::<f64>::cylinder(0.0, 1.0, 0.0, p, 3, 64).unwrap();
        let f = ScalarField::from_fn(s, |_, y| y.sin()).unwrap();
        let h = s.hy;
        for j in 0..s.ny {
            let y = s.y(j);
            let exact = y.cos() * (h.sin() / h);
            assert!((f.dy(1, j) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_keeps_extent() {
        let s = GridSpec::<f64>::centered(4, 3, 0.25).unwrap();
        let r = s.refined();
        assert_eq!(r.x_range(), s.x_range());
        assert_eq!(r.y_range(), s.y_range());
        let c = GridSpec::<f64>::cylinder(0.0, 1.0, 0.0, 2.0, 5, 8).unwrap();
        assert_eq!(c.refined().period_y(), c.period_y());
    }
}
