//! First variations of the embedding data under a normal flow `ι_tf`, evaluated at
//! `t = 0` from flat-chart data, and their finite-difference oracles built from
//! actual immersions.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{embedding_data, principal_at, Christoffel, SurfaceData};
use crate::grid::{GridError, Mat2, OperatorField, ScalarField};
use crate::immersion::{forms_from_immersion, immerse, normal_flow, ImmersionError, ImmersionGrid};
use crate::scalar::{c, Real};

/// Default threshold for "u = 0" on exact data.
pub const TOL_Z: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationError {
    #[error("node ({i}, {j}) is not on Z: u = {u:e}")]
    NotOnZ { i: usize, j: usize, u: f64 },
    #[error("principal frame is undefined at node ({i}, {j})")]
    UndefinedFrame { i: usize, j: usize },
    #[error(transparent)]
    Immersion(#[from] ImmersionError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn check_spec<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<(), VariationError> {
    if s.spec() != f.spec() {
        return Err(GridError::SpecMismatch.into());
    }
    Ok(())
}

/// `∇df` for the metric `e^{2u}(dx² + dy²)`, as a symmetric 2-tensor.
pub fn covariant_hessian<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<OperatorField<T>, VariationError> {
    check_spec(s, f)?;
    Ok(OperatorField::from_fn(*s.spec(), |i, j| {
        let g = Christoffel::conformal(s.u.dx(i, j), s.u.dy(i, j));
        let (fx, fy) = (f.dx(i, j), f.dy(i, j));
        Mat2::sym(
            f.dxx(i, j) - g.x_xx * fx - g.y_xx * fy,
            f.dxy(i, j) - g.x_xy * fx - g.y_xy * fy,
            f.dyy(i, j) - g.x_yy * fx - g.y_yy * fy,
        )
    })?)
}

/// `Hess^Σ f`: the covariant Hessian with one index raised by `I⁻¹ = e^{-2u}`.
pub fn hessian_11<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<OperatorField<T>, VariationError> {
    let h = covariant_hessian(s, f)?;
    Ok(OperatorField::from_fn(*s.spec(), |i, j| h.at(i, j).scale((c::<T>(-2.0) * s.u.at(i, j)).exp()))?)
}

/// `d/dt B_tf = Hess^Σ f + f(B² - 𝟙)`.
pub fn shape_rate<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<OperatorField<T>, VariationError> {
    let h = hessian_11(s, f)?;
    Ok(OperatorField::from_fn(*s.spec(), |i, j| {
        let e4 = (c::<T>(-4.0) * s.u.at(i, j)).exp();
        let shift = f.at(i, j) * (e4 - T::one());
        h.at(i, j).add(&Mat2::diag(shift, shift))
    })?)
}

/// `d/dt I_tf = -2f II`.
pub fn metric_rate<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<OperatorField<T>, VariationError> {
    check_spec(s, f)?;
    let data = embedding_data(s);
    Ok(OperatorField::from_fn(*s.spec(), |i, j| data.second.at(i, j).scale(c::<T>(-2.0) * f.at(i, j)))?)
}

/// `d/dt II_tf = ∇df - f(I + III)`.
pub fn second_form_rate<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<OperatorField<T>, VariationError> {
    let h = covariant_hessian(s, f)?;
    Ok(OperatorField::from_fn(*s.spec(), |i, j| {
        let u = s.u.at(i, j);
        let w = f.at(i, j) * ((c::<T>(2.0) * u).exp() + (c::<T>(-2.0) * u).exp());
        h.at(i, j).sub(&Mat2::diag(w, w))
    })?)
}

/// `d/dt I_tf⁻¹ = -I⁻¹ (dI/dt) I⁻¹`, which equals `2f B I⁻¹`.
pub fn inverse_metric_rate<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<OperatorField<T>, VariationError> {
    let m = metric_rate(s, f)?;
    let data = embedding_data(s);
    Ok(OperatorField::from_fn(*s.spec(), |i, j| {
        let inv = data.first.at(i, j).inverse().expect("conformal metric");
        inv.mul(&m.at(i, j)).mul(&inv).scale(-T::one())
    })?)
}

/// Per-node `|d/dt B - (d/dt I⁻¹)·II - I⁻¹·(d/dt II)|`, the residual of the product
/// rule applied to `B = I⁻¹ II`.
pub fn product_rule_residual<T: Real>(s: &SurfaceData<T>, f: &ScalarField<T>) -> Result<ScalarField<T>, VariationError> {
    let b = shape_rate(s, f)?;
    let dinv = inverse_metric_rate(s, f)?;
    let dii = second_form_rate(s, f)?;
    let data = embedding_data(s);
    let spec = *s.spec();
    let vals = spec
        .nodes()
        .map(|(i, j)| {
            let inv = data.first.at(i, j).inverse().expect("conformal metric");
            let chain = dinv.at(i, j).mul(&data.second.at(i, j)).add(&inv.mul(&dii.at(i, j)));
            b.at(i, j).sub(&chain).max_abs()
        })
        .collect();
    Ok(ScalarField::new(spec, vals)?)
}

/// `(∇df(e₊, e₊), ∇df(e₋, e₋))` at a node of `Z`, with `e±` the unit principal
/// directions.
pub fn curvature_rate_at_z<T: Real>(
    s: &SurfaceData<T>,
    f: &ScalarField<T>,
    node: (usize, usize),
    tol_z: T,
) -> Result<(T, T), VariationError> {
    let (i, j) = node;
    let u = s.u.at(i, j);
    if u > tol_z {
        return Err(VariationError::NotOnZ { i, j, u: u.as_f64() });
    }
    let data = embedding_data(s);
    let metric = data.first.at(i, j);
    let p = principal_at(&data.shape.at(i, j), Some(&metric)).map_err(|_| VariationError::UndefinedFrame { i, j })?;
    let (ep, em) = p.frame.ok_or(VariationError::UndefinedFrame { i, j })?;
    let h = covariant_hessian(s, f)?.at(i, j);
    Ok((h.form(ep, ep), h.form(em, em)))
}

/// Finite-difference stencil in `t` for the immersion oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stencil {
    /// `(X(t) - X(-t)) / 2t`
    Central2,
    /// `(-X(2t) + 8X(t) - 8X(-t) + X(-2t)) / 12t`
    Central4,
}

impl Stencil {
    fn taps(self) -> &'static [(f64, f64)] {
        match self {
            Stencil::Central2 => &[(1.0, 0.5), (-1.0, -0.5)],
            Stencil::Central4 => &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)],
        }
    }
}

/// The fundamental forms of `ι_tf` recovered from the flowed immersion.
pub struct FlowedForms<T> {
    pub first: OperatorField<T>,
    pub second: OperatorField<T>,
    pub shape: OperatorField<T>,
}

fn flowed<T: Real>(g: &ImmersionGrid<T>, f: &ScalarField<T>, t: T) -> Result<FlowedForms<T>, VariationError> {
    let r = forms_from_immersion(&normal_flow(g, f, t)?)?;
    Ok(FlowedForms { first: r.first, second: r.second, shape: r.shape })
}

/// Immersion-based rates of `(I, II, B)` at `t = 0`.
pub fn oracle_rates<T: Real>(
    s: &SurfaceData<T>,
    f: &ScalarField<T>,
    t: T,
    stencil: Stencil,
) -> Result<FlowedForms<T>, VariationError> {
    check_spec(s, f)?;
    let g = immerse(s)?;
    oracle_rates_from(&g, f, t, stencil)
}

pub fn oracle_rates_from<T: Real>(
    g: &ImmersionGrid<T>,
    f: &ScalarField<T>,
    t: T,
    stencil: Stencil,
) -> Result<FlowedForms<T>, VariationError> {
    let spec = *g.spec();
    let zero = OperatorField::from_fn(spec, |_, _| Mat2::zero())?;
    let mut acc = FlowedForms { first: zero.clone(), second: zero.clone(), shape: zero };
    for &(mult, w) in stencil.taps() {
        let ff = flowed(g, f, t * c::<T>(mult))?;
        let k = c::<T>(w) / t;
        let add = |a: &OperatorField<T>, b: &OperatorField<T>| a.zip_with(b, |p, q| p.add(&q.scale(k)));
        acc.first = add(&acc.first, &ff.first)?;
        acc.second = add(&acc.second, &ff.second)?;
        acc.shape = add(&acc.shape, &ff.shape)?;
    }
    Ok(acc)
}

/// A closed-form rate next to its immersion oracle.
#[derive(Debug, Clone, Serialize)]
pub struct VariationReport<T> {
    pub formula: String,
    #[serde(skip)]
    pub rate: OperatorField<T>,
    #[serde(skip)]
    pub oracle: OperatorField<T>,
    /// Sup over nodes at least `margin` nodes from the non-periodic edges.
    pub discrepancy: T,
    pub t: T,
    pub h: T,
    pub margin: usize,
}

/// Compare `shape_rate`, `metric_rate` and `second_form_rate` with the immersion
/// oracle.
pub fn verify_rates<T: Real>(
    s: &SurfaceData<T>,
    f: &ScalarField<T>,
    t: T,
    stencil: Stencil,
    margin: usize,
) -> Result<Vec<VariationReport<T>>, VariationError> {
    let oracle = oracle_rates(s, f, t, stencil)?;
    let h = s.spec().h_max();
    let mk = |name: &str, rate: OperatorField<T>, oracle: OperatorField<T>| VariationReport {
        formula: name.to_string(),
        discrepancy: rate.sup_diff_inner(&oracle, margin),
        rate,
        oracle,
        t,
        h,
        margin,
    };
    Ok(vec![
        mk("shape_rate", shape_rate(s, f)?, oracle.shape),
        mk("metric_rate", metric_rate(s, f)?, oracle.first),
        mk("second_form_rate", second_form_rate(s, f)?, oracle.second),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn spec() -> GridSpec<f64> {
        GridSpec::rectangle(-0.5, 0.5, -0.5, 0.5, 21, 21).unwrap()
    }

    #[test]
    fn euclidean_hessian_of_saddle() {
        let s = SurfaceData::new(ScalarField::zeros(spec()));
        let f = ScalarField::from_fn(spec(), |x, y| (-x * x + y * y) / 2.0).unwrap();
        let h = hessian_11(&s, &f).unwrap();
        for (i, j) in spec().interior_nodes() {
            assert!(h.at(i, j).sub(&Mat2::diag(-1.0, 1.0)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_f_gives_zero_rates() {
        let s = SurfaceData::from_fn(spec(), |x, y| 0.3 * x * x + 0.1 * y).unwrap();
        let f = ScalarField::zeros(spec());
        for r in [shape_rate(&s, &f).unwrap(), metric_rate(&s, &f).unwrap(), second_form_rate(&s, &f).unwrap()] {
            assert!(r.values().iter().all(|m| m.max_abs() == 0.0));
        }
    }

    #[test]
    fn constant_f_at_flat_exponent() {
        let s = SurfaceData::new(ScalarField::zeros(spec()));
        let f = ScalarField::constant(spec(), 1.0);
        assert_eq!(metric_rate(&s, &f).unwrap().at(3, 3), Mat2::diag(-2.0, 2.0));
        assert_eq!(second_form_rate(&s, &f).unwrap().at(3, 3), Mat2::diag(-2.0, -2.0));
    }

    #[test]
    fn not_on_z() {
        let s = SurfaceData::new(ScalarField::constant(spec(), 0.1));
        let f = ScalarField::zeros(spec());
        assert!(matches!(curvature_rate_at_z(&s, &f, (5, 5), TOL_Z), Err(VariationError::NotOnZ { .. })));
    }
}
