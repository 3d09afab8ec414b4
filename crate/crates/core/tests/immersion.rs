use minsurf::geometry::{embedding_data, SurfaceData};
use minsurf::grid::{GridSpec, Mat2, OperatorField, ScalarField};
use minsurf::immersion::{
    equidistant_shape, forms_from_immersion, immerse, immerse_with_order, normal_flow, ImmersionGrid, MinkowskiVec,
    PathOrder,
};
use minsurf::invariant_ode::{integrate_fraction, OdeSettings};

fn invariant_surface(v0: f64, half_nodes: usize, h: f64) -> SurfaceData<f64> {
    let sol = integrate_fraction(v0, 0.8, &OdeSettings::with_tol(1e-12)).unwrap();
    let spec = GridSpec::centered(half_nodes, half_nodes, h).unwrap();
    sol.to_surface(spec).unwrap()
}

/// Sup-error at the nodes of the coarse grid (which are every other fine node),
/// staying `margin` coarse nodes away from the edges.
fn shared_errors(errs: &[OperatorField<f64>; 2], margin: usize) -> (f64, f64) {
    let coarse = *errs[0].spec();
    let mut out = (0.0f64, 0.0f64);
    for (i, j) in coarse.inner_nodes(margin) {
        out.0 = out.0.max(errs[0].at(i, j).max_abs());
        out.1 = out.1.max(errs[1].at(2 * i, 2 * j).max_abs());
    }
    out
}

fn diff(a: &OperatorField<f64>, b: &OperatorField<f64>) -> OperatorField<f64> {
    a.zip_with(b, |p, q| p.sub(q)).unwrap()
}

#[test]
fn round_trip_second_order() {
    let mut errs = Vec::new();
    for (n, h) in [(16, 1.0 / 32.0), (32, 1.0 / 64.0)] {
        let s = invariant_surface(0.0, n, h);
        let g = immerse(&s).unwrap();
        assert!(g.constraint_drift() <= 1e-9);
        let rec = forms_from_immersion(&g).unwrap();
        let ana = embedding_data(&s);
        errs.push([diff(&rec.first, &ana.first), diff(&rec.second, &ana.second), diff(&rec.shape, &ana.shape)]);
    }
    for k in 0..3 {
        let (e1, e2) = shared_errors(&[errs[0][k].clone(), errs[1][k].clone()], 2);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "form {k}: ratio {ratio} ({e1:e} / {e2:e})");
    }
}

#[test]
fn base_node_metric_is_conformal() {
    let s = invariant_surface(0.3, 16, 1.0 / 32.0);
    let g = immerse(&s).unwrap();
    let (i0, j0) = (s.spec().nx / 2, s.spec().ny / 2);
    assert_eq!(g.sigma(i0, j0), MinkowskiVec::basis(0));
    assert_eq!(g.nu(i0, j0), MinkowskiVec::basis(3));
}

#[test]
fn row_speed_matches_conformal_factor() {
    let h = 1.0 / 64.0;
    let s = invariant_surface(0.0, 32, h);
    let g = immerse(&s).unwrap();
    let spec = *s.spec();
    let j = spec.ny / 3;
    let mut worst: f64 = 0.0;
    for i in 1..spec.nx - 1 {
        let d = g.sigma(i + 1, j) - g.sigma(i - 1, j);
        let speed = d.sq().sqrt() / (2.0 * h);
        worst = worst.max((speed / s.u.at(i, j).exp() - 1.0).abs());
    }
    assert!(worst < 20.0 * h * h, "{worst}");
}

#[test]
fn path_independence() {
    let mut diffs = Vec::new();
    for (n, h) in [(12, 1.0 / 24.0), (24, 1.0 / 48.0)] {
        let s = invariant_surface(0.2, n, h);
        let a = immerse_with_order(&s, PathOrder::RowsFirst).unwrap();
        let b = immerse_with_order(&s, PathOrder::ColumnsFirst).unwrap();
        let d = a
            .positions()
            .iter()
            .zip(b.positions())
            .map(|(p, q)| (*p - *q).0.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max);
        diffs.push(d);
    }
    assert!(diffs[0] < 1e-2);
    assert!(diffs[0] / diffs[1] > 3.0, "{diffs:?}");
}

#[test]
fn zero_flow_is_identity_on_positions() {
    let s = invariant_surface(0.0, 8, 1.0 / 16.0);
    let g = immerse(&s).unwrap();
    let f = ScalarField::from_fn(*s.spec(), |x, y| 1.0 + x * y).unwrap();
    let moved = normal_flow(&g, &f, 0.0).unwrap();
    assert_eq!(moved.positions(), g.positions());
}

#[test]
fn flow_keeps_hyperboloid() {
    let s = invariant_surface(0.0, 16, 1.0 / 32.0);
    let g = immerse(&s).unwrap();
    let f = ScalarField::from_fn(*s.spec(), |x, y| (x + 2.0 * y).cos()).unwrap();
    let moved = normal_flow(&g, &f, 0.3).unwrap();
    for p in moved.positions() {
        assert!((p.sq() + 1.0).abs() <= 1e-12);
    }
}

#[test]
fn equidistant_surfaces() {
    let dist = 0.2;
    let mut errs = Vec::new();
    for (n, h) in [(16, 1.0 / 32.0), (32, 1.0 / 64.0)] {
        let s = invariant_surface(0.0, n, h);
        let g = immerse(&s).unwrap();
        let f = ScalarField::constant(*s.spec(), 1.0);
        let moved = normal_flow(&g, &f, dist).unwrap();
        let rec = forms_from_immersion(&moved).unwrap();
        let want = embedding_data(&s).shape.map(|b| equidistant_shape(b, dist).unwrap()).unwrap();
        errs.push(diff(&rec.shape, &want));
    }
    let (e1, e2) = shared_errors(&[errs[0].clone(), errs[1].clone()], 2);
    assert!(e2 < 1e-3, "{e1:e} {e2:e}");
    assert!((3.5..=4.5).contains(&(e1 / e2)), "{e1:e} {e2:e}");
}

#[test]
fn constant_flow_is_one_parameter() {
    let s = invariant_surface(0.0, 10, 1.0 / 20.0);
    let g = immerse(&s).unwrap();
    let f = ScalarField::constant(*s.spec(), 1.0);
    let twice = normal_flow(&normal_flow(&g, &f, 0.1).unwrap(), &f, 0.15).unwrap();
    let once = normal_flow(&g, &f, 0.25).unwrap();
    // the second flow moves along recomputed normals, exact up to O(h²)
    let h: f64 = 1.0 / 20.0;
    let worst = twice
        .positions()
        .iter()
        .zip(once.positions())
        .map(|(p, q)| (*p - *q).0.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max);
    assert!(worst < 0.15 * h * h, "{worst}");
}

fn boost(r: f64) -> [[f64; 4]; 4] {
    let (ch, sh) = (r.cosh(), r.sinh());
    [[ch, sh, 0.0, 0.0], [sh, ch, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn rotation(a: f64) -> [[f64; 4]; 4] {
    let (cs, sn) = (a.cos(), a.sin());
    [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, cs, -sn], [0.0, 0.0, sn, cs]]
}

fn compose(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

#[test]
fn isometry_invariance() {
    let s = invariant_surface(0.1, 12, 1.0 / 24.0);
    let g = immerse(&s).unwrap();
    let m = compose(&boost(0.4), &rotation(0.7));
    let moved = g.transformed(&m);
    assert!(moved.constraint_drift() <= 1e-9);
    let a = forms_from_immersion(&g).unwrap();
    let b = forms_from_immersion(&moved).unwrap();
    assert!(a.first.sup_diff_inner(&b.first, 0) <= 1e-12);
    assert!(a.second.sup_diff_inner(&b.second, 0) <= 1e-12);
    assert!(a.shape.sup_diff_inner(&b.shape, 0) <= 1e-12);
}

#[test]
fn totally_geodesic_plane() {
    let spec = GridSpec::<f64>::rectangle(-0.5, 0.5, -0.5, 0.5, 21, 21).unwrap();
    let sigma = spec
        .nodes()
        .map(|(i, j)| {
            let (x, y) = spec.xy(i, j);
            MinkowskiVec::new((1.0 + x * x + y * y).sqrt(), x, y, 0.0)
        })
        .collect();
    let nu = vec![MinkowskiVec::basis(3); spec.len()];
    let g = ImmersionGrid::new(spec, sigma, nu).unwrap();
    let rec = forms_from_immersion(&g).unwrap();
    assert!(rec.second.values().iter().all(|m| m.max_abs() < 1e-14));
    assert!(rec.shape.values().iter().all(Mat2::is_finite));
}

#[test]
fn axis_shape_operator() {
    let h = 1.0 / 64.0;
    let s = invariant_surface(0.0, 32, h);
    let rec = forms_from_immersion(&immerse(&s).unwrap()).unwrap();
    let i0 = s.spec().nx / 2;
    for j in 1..s.spec().ny - 1 {
        let b = rec.shape.at(i0, j);
        assert!(b.sub(&Mat2::diag(1.0, -1.0)).max_abs() < 20.0 * h * h);
    }
}
