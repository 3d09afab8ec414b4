//! Embedding data of a minimal surface written in a flat coordinate of its Hopf
//! differential, `I = e^{2u}(dx² + dy²)`, `II = dx² - dy²`, and the residuals that
//! certify such data.

use thiserror::Error;

use crate::grid::{GridError, GridSpec, Mat2, OperatorField, ScalarField};
use crate::scalar::{c, Real};

/// Lower bound for `u` on surfaces with `‖II‖² ≤ 2`, allowing for roundoff.
pub const TOL_POS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("complex eigenvalues at node ({i}, {j}): discriminant {discriminant:e}")]
    ComplexEigenvalues { i: usize, j: usize, discriminant: f64 },
    #[error("metric supplied on a different grid")]
    SpecMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The conformal exponent `u` of a minimal surface in a flat chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceData<T> {
    pub u: ScalarField<T>,
    weakly_bounded: bool,
}

impl<T: Real> SurfaceData<T> {
    pub fn new(u: ScalarField<T>) -> Self {
        let weakly_bounded = u.min() >= -c::<T>(TOL_POS);
        Self { u, weakly_bounded }
    }

    pub fn from_fn(spec: GridSpec<T>, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        Ok(Self::new(ScalarField::from_fn(spec, f)?))
    }

    pub fn spec(&self) -> &GridSpec<T> {
        self.u.spec()
    }

    /// `u ≥ -TOL_POS` everywhere, i.e. principal curvatures in `[-1, 1]`.
    pub fn weakly_bounded(&self) -> bool {
        self.weakly_bounded
    }
}

/// First and second fundamental forms and the shape operator in the flat chart.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingData<T> {
    pub first: OperatorField<T>,
    pub second: OperatorField<T>,
    pub shape: OperatorField<T>,
}

pub fn embedding_data<T: Real>(s: &SurfaceData<T>) -> EmbeddingData<T> {
    let spec = *s.spec();
    let first = OperatorField::from_fn(spec, |i, j| {
        let e = (c::<T>(2.0) * s.u.at(i, j)).exp();
        Mat2::diag(e, e)
    });
    let second = OperatorField::from_fn(spec, |_, _| Mat2::diag(T::one(), -T::one()));
    let shape = OperatorField::from_fn(spec, |i, j| {
        let e = (c::<T>(-2.0) * s.u.at(i, j)).exp();
        Mat2::diag(e, -e)
    });
    // u is finite, so the only failure mode is overflow of e^{±2u}.
    EmbeddingData {
        first: first.expect("e^{2u} overflows"),
        second: second.expect("constant field"),
        shape: shape.expect("e^{-2u} overflows"),
    }
}

/// `III(X, Y) = I(BX, BY)`, which is `e^{-2u}(dx² + dy²)` in a flat chart.
pub fn third_form<T: Real>(s: &SurfaceData<T>) -> OperatorField<T> {
    OperatorField::from_fn(*s.spec(), |i, j| {
        let e = (c::<T>(-2.0) * s.u.at(i, j)).exp();
        Mat2::diag(e, e)
    })
    .expect("e^{-2u} overflows")
}

/// `III = Bᵀ I B` computed node by node from arbitrary `I` and `B`.
pub fn third_form_from<T: Real>(first: &OperatorField<T>, shape: &OperatorField<T>) -> OperatorField<T> {
    first
        .zip_with(shape, |i, b| b.transpose().mul(i).mul(b))
        .expect("fields share a grid")
}

/// Ordered principal curvatures `λ⁺ ≥ λ⁻` and unit eigenvectors at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Principal<T> {
    pub plus: T,
    pub minus: T,
    /// `(e₊, e₋)`, `None` when the eigenvalues coincide to within `1e-12`.
    pub frame: Option<([T; 2], [T; 2])>,
}

/// Eigen-decomposition of a single 2×2 operator.
///
/// Fails on a discriminant below `-1e-12`. Eigenvectors are unit length for `metric`
/// when given (the shape operator is self-adjoint for `I`), Euclidean otherwise.
pub fn principal_at<T: Real>(b: &Mat2<T>, metric: Option<&Mat2<T>>) -> Result<Principal<T>, T> {
    let tr = b.trace();
    // equal to tr² - 4det, without the cancellation near double eigenvalues
    let gap = b.a11 - b.a22;
    let disc = gap * gap + c::<T>(4.0) * b.a12 * b.a21;
    if disc < -c::<T>(1e-12) {
        return Err(disc);
    }
    let root = disc.max(T::zero()).sqrt();
    let half = c::<T>(0.5);
    let plus = half * (tr + root);
    let minus = half * (tr - root);
    let frame = if disc < c::<T>(1e-12) {
        None
    } else {
        let ep = eigenvector(b, plus, metric);
        let em = eigenvector(b, minus, metric);
        Some((ep, em))
    };
    Ok(Principal { plus, minus, frame })
}

fn eigenvector<T: Real>(b: &Mat2<T>, lambda: T, metric: Option<&Mat2<T>>) -> [T; 2] {
    // Rows of (B - λ) are orthogonal to the eigenvector; take the better conditioned one.
    let v1 = [b.a12, lambda - b.a11];
    let v2 = [lambda - b.a22, b.a21];
    let n1 = v1[0] * v1[0] + v1[1] * v1[1];
    let n2 = v2[0] * v2[0] + v2[1] * v2[1];
    let mut v = if n1 >= n2 { v1 } else { v2 };
    if n1.max(n2) == T::zero() {
        v = [T::one(), T::zero()];
    }
    let norm = match metric {
        Some(g) => g.form(v, v).sqrt(),
        None => (v[0] * v[0] + v[1] * v[1]).sqrt(),
    };
    let mut v = [v[0] / norm, v[1] / norm];
    if v[0] < T::zero() || (v[0] == T::zero() && v[1] < T::zero()) {
        v = [-v[0], -v[1]];
    }
    v
}

/// Principal curvatures and eigenframes on a whole field.
#[derive(Debug, Clone)]
pub struct PrincipalField<T> {
    pub lambda_plus: ScalarField<T>,
    pub lambda_minus: ScalarField<T>,
    pub frames: Vec<Option<([T; 2], [T; 2])>>,
}

impl<T: Real> PrincipalField<T> {
    pub fn frame(&self, i: usize, j: usize) -> Option<([T; 2], [T; 2])> {
        self.frames[self.lambda_plus.spec().idx(i, j)]
    }
}

pub fn principal_curvatures<T: Real>(
    shape: &OperatorField<T>,
    first: Option<&OperatorField<T>>,
) -> Result<PrincipalField<T>, GeometryError> {
    let spec = *shape.spec();
    if let Some(g) = first {
        if *g.spec() != spec {
            return Err(GeometryError::SpecMismatch);
        }
    }
    let mut plus = Vec::with_capacity(spec.len());
    let mut minus = Vec::with_capacity(spec.len());
    let mut frames = Vec::with_capacity(spec.len());
    for (i, j) in spec.nodes() {
        let metric = first.map(|g| g.at(i, j));
        let p = principal_at(&shape.at(i, j), metric.as_ref())
            .map_err(|d| GeometryError::ComplexEigenvalues { i, j, discriminant: d.as_f64() })?;
        plus.push(p.plus);
        minus.push(p.minus);
        frames.push(p.frame);
    }
    Ok(PrincipalField {
        lambda_plus: ScalarField::new(spec, plus)?,
        lambda_minus: ScalarField::new(spec, minus)?,
        frames,
    })
}

/// `Δ_h u - 2cosh(2u)` at interior nodes; zero on the non-periodic boundary.
pub fn gauss_residual<T: Real>(s: &SurfaceData<T>) -> ScalarField<T> {
    let spec = *s.spec();
    let mut r = ScalarField::zeros(spec);
    for (i, j) in spec.interior_nodes() {
        let u = s.u.at(i, j);
        r.set(i, j, s.u.laplacian(i, j) - c::<T>(2.0) * (c::<T>(2.0) * u).cosh());
    }
    r
}

/// Christoffel symbols of `e^{2u}(dx² + dy²)` at one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Christoffel<T> {
    pub x_xx: T,
    pub y_xx: T,
    pub x_xy: T,
    pub y_xy: T,
    pub x_yy: T,
    pub y_yy: T,
}

impl<T: Real> Christoffel<T> {
    /// Symbols of the conformal metric with `∇u = (ux, uy)`.
    pub fn conformal(ux: T, uy: T) -> Self {
        Self { x_xx: ux, y_xx: -uy, x_xy: uy, y_xy: ux, x_yy: -ux, y_yy: uy }
    }

    pub fn max_abs(&self) -> T {
        [self.x_xx, self.y_xx, self.x_xy, self.y_xy, self.x_yy, self.y_yy]
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `Γ^x_ij` and `Γ^y_ij` as symmetric matrices in `(i, j)`.
    pub fn as_matrices(&self) -> (Mat2<T>, Mat2<T>) {
        (Mat2::sym(self.x_xx, self.x_xy, self.x_yy), Mat2::sym(self.y_xx, self.y_xy, self.y_yy))
    }
}

/// Christoffel symbols from central differences of `u` (one-sided on the edges).
pub fn christoffel<T: Real>(s: &SurfaceData<T>) -> Vec<Christoffel<T>> {
    s.spec().nodes().map(|(i, j)| Christoffel::conformal(s.u.dx(i, j), s.u.dy(i, j))).collect()
}

/// `tr B`, `tr B² - 2e^{-4u}`, `λ⁺ + λ⁻` and `det B + e^{-4u}`, maximised over nodes.
pub fn invariant_defects<T: Real>(s: &SurfaceData<T>) -> [T; 4] {
    let data = embedding_data(s);
    let mut out = [T::zero(); 4];
    for (i, j) in s.spec().nodes() {
        let b = data.shape.at(i, j);
        let e4 = (c::<T>(-4.0) * s.u.at(i, j)).exp();
        let p = principal_at(&b, None).expect("diagonal operator");
        let d = [b.trace(), b.mul(&b).trace() - c::<T>(2.0) * e4, p.plus + p.minus, b.det() + e4];
        for k in 0..4 {
            out[k] = out[k].max(d[k].abs());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec<f64> {
        GridSpec::rectangle(-0.5, 0.5, -0.5, 0.5, 11, 11).unwrap()
    }

    #[test]
    fn flat_exponent_zero() {
        let s = SurfaceData::new(ScalarField::zeros(grid()));
        let d = embedding_data(&s);
        let pc = principal_curvatures(&d.shape, Some(&d.first)).unwrap();
        for (i, j) in grid().nodes() {
            assert_eq!(d.shape.at(i, j), Mat2::diag(1.0, -1.0));
            assert_eq!(pc.lambda_plus.at(i, j), 1.0);
            assert_eq!(pc.lambda_minus.at(i, j), -1.0);
            assert_eq!(pc.frame(i, j), Some(([1.0, 0.0], [0.0, 1.0])));
            let b = d.shape.at(i, j);
            assert_eq!(b.mul(&b).trace(), 2.0);
        }
    }

    #[test]
    fn conformal_factor_two() {
        let s = SurfaceData::new(ScalarField::constant(grid(), 0.5 * 2f64.ln()));
        let d = embedding_data(&s);
        let i = d.first.at(3, 3);
        let b = d.shape.at(3, 3);
        assert!((i.a11 - 2.0).abs() < 1e-15 && (i.a22 - 2.0).abs() < 1e-15);
        assert!((b.a11 - 0.5).abs() < 1e-15 && (b.a22 + 0.5).abs() < 1e-15);
    }

    #[test]
    fn exponent_point_three() {
        let s = SurfaceData::new(ScalarField::constant(grid(), 0.3));
        let d = embedding_data(&s);
        let pc = principal_curvatures(&d.shape, None).unwrap();
        assert!((pc.lambda_plus.at(0, 0) - (-0.6f64).exp()).abs() < 1e-15);
        assert!((pc.lambda_minus.at(0, 0) + (-0.6f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn umbilic_frame_undefined() {
        let p = principal_at(&Mat2::<f64>::zero(), None).unwrap();
        assert!(p.frame.is_none());
        assert!(matches!(principal_at(&Mat2::new(0.0, 1.0, -1.0, 0.0), None), Err(d) if d < 0.0));
        let b = OperatorField::from_fn(grid(), |_, _| Mat2::new(0.0, 1.0, -1.0, 0.0)).unwrap();
        assert!(matches!(principal_curvatures(&b, None), Err(GeometryError::ComplexEigenvalues { .. })));
    }

    #[test]
    fn eigenvector_sign_convention() {
        let p = principal_at(&Mat2::diag(-1.0, 1.0), None).unwrap();
        let (ep, em) = p.frame.unwrap();
        assert_eq!(ep, [0.0, 1.0]);
        assert_eq!(em, [1.0, 0.0]);
    }

    #[test]
    fn gauss_residual_of_zero_is_minus_two() {
        let s = SurfaceData::new(ScalarField::zeros(grid()));
        let r = gauss_residual(&s);
        for (i, j) in grid().interior_nodes() {
            assert_eq!(r.at(i, j), -2.0);
        }
        assert_eq!(r.at(0, 0), 0.0);
    }

    #[test]
    fn third_form_constant_exponent() {
        for cst in [0.0, 0.7, -0.2] {
            let s = SurfaceData::new(ScalarField::constant(grid(), cst));
            let iii = third_form(&s);
            let e = (-2.0 * cst).exp();
            assert!(iii.at(2, 5).sub(&Mat2::diag(e, e)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn christoffel_constant_and_linear() {
        let s = SurfaceData::new(ScalarField::constant(grid(), 0.4));
        assert!(christoffel(&s).iter().all(|g| g.max_abs() < 1e-14));
        let s = SurfaceData::from_fn(grid(), |x, _| x).unwrap();
        for g in christoffel(&s) {
            assert!((g.x_xx - 1.0).abs() < 1e-13);
            assert!((g.y_xy - 1.0).abs() < 1e-13);
            assert!((g.x_yy + 1.0).abs() < 1e-13);
            assert!(g.y_xx.abs() < 1e-13 && g.x_xy.abs() < 1e-13 && g.y_yy.abs() < 1e-13);
        }
    }

    #[test]
    fn christoffel_vanishes_at_critical_set() {
        // u = x² has ∇u = 0 on the line x = 0
        let spec = GridSpec::<f64>::centered(8, 8, 0.05).unwrap();
        let s = SurfaceData::from_fn(spec, |x, _| x * x).unwrap();
        let g = christoffel(&s);
        for (i, j) in spec.nodes() {
            if s.u.at(i, j).abs() < 1e-14 {
                assert!(g[spec.idx(i, j)].max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_weakly_bounded_flag() {
        let s = SurfaceData::new(ScalarField::constant(grid(), -1e-9));
        assert!(!s.weakly_bounded());
        let s = SurfaceData::new(ScalarField::constant(grid(), -1e-13));
        assert!(s.weakly_bounded());
    }

    proptest! {
        #[test]
        fn invariants_hold(amp in -2.0f64..2.0, kx in -3.0f64..3.0, ky in -3.0f64..3.0) {
            let s = SurfaceData::from_fn(grid(), |x, y| amp * (kx * x + ky * y).sin()).unwrap();
            let d = invariant_defects(&s);
            prop_assert!(d[0] < 1e-13);
            prop_assert!(d[1] <= 1e-13 * (4.0 * amp.abs()).exp().max(1.0) );
            prop_assert!(d[2] < 1e-13);
            prop_assert!(d[3] <= 1e-13 * (4.0 * amp.abs()).exp().max(1.0));
            let data = embedding_data(&s);
            let iii = third_form(&s);
            let check = third_form_from(&data.first, &data.shape);
            prop_assert!(iii.sup_diff_inner(&check, 0) <= 1e-13 * (2.0 * amp.abs()).exp());
        }

        #[test]
        fn symmetric_spectrum_matches_construction(l1 in -5.0f64..5.0, l2 in -5.0f64..5.0, th in 0.0f64..6.3) {
            let (cs, sn) = (th.cos(), th.sin());
            // R diag(l1, l2) Rᵀ
            let a11 = l1 * cs * cs + l2 * sn * sn;
            let a22 = l1 * sn * sn + l2 * cs * cs;
            let a12 = (l1 - l2) * cs * sn;
            let p = principal_at(&Mat2::sym(a11, a12, a22), None).unwrap();
            let (hi, lo) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!((p.plus - hi).abs() < 1e-12 * (1.0 + hi.abs()) * 10.0);
            prop_assert!((p.minus - lo).abs() < 1e-12 * (1.0 + lo.abs()) * 10.0);
            if let Some((ep, em)) = p.frame {
                let m = Mat2::sym(a11, a12, a22);
                let r = m.apply(ep);
                prop_assert!((r[0] - p.plus * ep[0]).abs() < 1e-10 && (r[1] - p.plus * ep[1]).abs() < 1e-10);
                let r = m.apply(em);
                prop_assert!((r[0] - p.minus * em[0]).abs() < 1e-10 && (r[1] - p.minus * em[1]).abs() < 1e-10);
                prop_assert!(ep[0] >= 0.0 && em[0] >= 0.0);
            }
        }
    }
}
