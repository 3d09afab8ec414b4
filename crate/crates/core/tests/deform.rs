use minsurf::deform::*;
use minsurf::geometry::SurfaceData;
use minsurf::grid::{GridSpec, ScalarField};
use minsurf::invariant_ode::{integrate_fraction, OdeSettings};
use minsurf::variation::curvature_rate_at_z;

fn wavy_translation_chart(l: f64) -> CurveChart<f64> {
    CurveChart::new(l, Holonomy::Translation(l, 0.0), [0.0; 2], vec![[0.0, l / 4.0]], vec![[0.0, 0.0]]).unwrap()
}

fn invariant_cylinder(v0: f64, h: f64) -> SurfaceData<f64> {
    let sol = integrate_fraction(v0, 0.8, &OdeSettings::with_tol(1e-12)).unwrap();
    let half = (0.3 / h).round() as usize;
    let spec = GridSpec::cylinder(-(half as f64) * h, half as f64 * h, 0.0, 1.0, 2 * half + 1, (1.0 / h) as usize).unwrap();
    sol.to_surface(spec).unwrap()
}

#[test]
fn invariant_model_locus_is_a_straight_line() {
    let h = 1.0 / 32.0;
    let s = invariant_cylinder(0.0, h);
    let z = detect_z(&s, 1e-8).unwrap();
    assert_eq!(z.len(), 1);
    assert_eq!(z[0].kind, ZKind::Curve);
    assert!(z[0].wraps);
    assert!(z[0].line_deviation <= h * h);
    assert!(z[0].samples.iter().all(|p| p.0.abs() < 1e-14));
    assert!(matches!(genericity_check(&z[0], None), Err(DeformError::NonGenericCurve { .. })));
    assert!(matches!(assemble_f(&s, &z, 0.1), Err(DeformError::NonGenericCurve { .. })));
}

#[test]
fn positive_minimum_has_empty_locus() {
    let s = invariant_cylinder(0.5, 1.0 / 32.0);
    assert!(detect_z(&s, 1e-8).unwrap().is_empty());
}

#[test]
fn single_point_equals_point_builder() {
    let spec = GridSpec::<f64>::centered(24, 24, 1.0 / 32.0).unwrap();
    let s = SurfaceData::from_fn(spec, |x, y| x * x + y * y).unwrap();
    let z = detect_z(&s, 1e-8).unwrap();
    let prof = assemble_f(&s, &z, 0.3).unwrap();
    let direct = build_point_f(&spec, (0.0, 0.0), 0.3).unwrap();
    assert_eq!(prof.f.values(), direct.values());
    assert_eq!(prof.pieces[0].kind, PieceKind::Point);
    // plateau: exact quadratic
    let (i, j) = spec.nearest_node(0.0625, -0.125);
    let (x, y) = spec.xy(i, j);
    assert!((direct.at(i, j) - (y * y - x * x) / 2.0).abs() < 1e-15);
    // support
    for (i, j) in spec.nodes() {
        let (x, y) = spec.xy(i, j);
        if (x * x + y * y).sqrt() >= 0.3 {
            assert_eq!(direct.at(i, j), 0.0);
        }
    }
}

#[test]
fn two_far_points_have_disjoint_supports() {
    let h = 1.0 / 32.0;
    let spec = GridSpec::centered(32, 16, h).unwrap();
    let (p, q) = ((-0.5, 0.0), (0.5, 0.0));
    let d2 = |x: f64, y: f64, c: (f64, f64)| (x - c.0).powi(2) + (y - c.1).powi(2);
    let s = SurfaceData::from_fn(spec, |x, y| d2(x, y, p) * d2(x, y, q)).unwrap();
    let z = detect_z(&s, 1e-10).unwrap();
    assert_eq!(z.len(), 2);
    let r = 0.3;
    let prof = assemble_f(&s, &z, r).unwrap();
    for (i, j) in spec.nodes() {
        let (x, y) = spec.xy(i, j);
        let near_p = d2(x, y, p).sqrt() < r;
        let near_q = d2(x, y, q).sqrt() < r;
        assert!(!(near_p && near_q));
        if !near_p && !near_q {
            assert_eq!(prof.f.at(i, j), 0.0);
        }
    }
    for comp in &z {
        let (i, j) = comp.nodes[0];
        let (rp, rm) = curvature_rate_at_z(&s, &prof.f, (i, j), 1e-10).unwrap();
        assert!((rp + 1.0).abs() <= 10.0 * h * h + 1e-10, "{rp}");
        assert!((rm - 1.0).abs() <= 10.0 * h * h + 1e-10, "{rm}");
    }
}

#[test]
fn empty_locus_gives_zero() {
    let spec = GridSpec::centered(8, 8, 0.1).unwrap();
    let s = SurfaceData::new(ScalarField::constant(spec, 0.7));
    let z = detect_z(&s, 1e-8).unwrap();
    let prof = assemble_f(&s, &z, 0.2).unwrap();
    assert!(prof.f.values().iter().all(|&v| v == 0.0));
}

#[test]
fn halfturn_tube_conditions() {
    for hol in [Holonomy::HalfTurn, Holonomy::Trivial] {
        let chart = CurveChart::new(4.0, hol, [0.2, 0.1], vec![[1.0, 0.3]], vec![[0.2, 1.0]]).unwrap();
        let tube = TubeDeformation::new(chart, 0.2).unwrap();
        for k in 0..16 {
            let t = 4.0 * k as f64 / 16.0;
            assert!((tube.eval(t, 0.05) - tube.eval(t + 4.0, 0.05)).abs() <= 1e-14);
            let z = tube.chart.dev(t, 0.0);
            let e = 1.0 / 64.0;
            let at = |dx: f64, dy: f64| tube.flat_value([z[0] + dx, z[1] + dy], t).unwrap();
            let f0 = at(0.0, 0.0);
            let fxx = (at(e, 0.0) - 2.0 * f0 + at(-e, 0.0)) / (e * e);
            let fyy = (at(0.0, e) - 2.0 * f0 + at(0.0, -e)) / (e * e);
            let fxy = (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4.0 * e * e);
            assert!((fxx + 1.0).abs() < 1e-8 && (fyy - 1.0).abs() < 1e-8 && fxy.abs() < 1e-8, "{hol:?}");
        }
    }
}

#[test]
fn translation_periodicity_and_hessian() {
    let d = TranslationDeformation::new(wavy_translation_chart(16.0), 0.5).unwrap();
    assert!(d.periodicity_residual(32) <= 1e-12);
    for h in [1.0 / 64.0, 1.0 / 128.0] {
        let defect = d.flat_hessian_defect(256, h).unwrap();
        assert!(defect <= 10.0 * h * h, "h = {h}: {defect:e}");
    }
    assert_eq!(d.eval(3.0, 0.5), 0.0);
    assert_eq!(d.eval(3.0, -0.7), 0.0);
}

#[test]
fn translation_seams_are_smooth() {
    let d = TranslationDeformation::new(wavy_translation_chart(16.0), 0.5).unwrap();
    let mut bounds = Vec::new();
    // the cutoff varies on the scale r/2 across the tube, so s is resolved more finely than t
    for n in [1024usize, 2048] {
        let hs = 1.0 / (n / 4) as f64;
        let half = (0.6 / hs).round() as usize;
        let spec = GridSpec::cylinder(-(half as f64) * hs, half as f64 * hs, 0.0, 16.0, 2 * half + 1, n).unwrap();
        bounds.push(fourth_difference_bound(&d.field(&spec).unwrap()));
    }
    let (a, b) = (bounds[0], bounds[1]);
    assert!(b.0 <= 1.25 * a.0 && b.1 <= 1.25 * a.1, "{a:?} {b:?}");
}

#[test]
fn translation_needs_nonzero_holonomy() {
    let chart = CurveChart::new(1.0, Holonomy::Translation(0.0, 0.0), [0.0; 2], vec![[0.1, 0.0]], vec![[0.0, 0.1]]).unwrap();
    assert!(matches!(TranslationDeformation::new(chart, 0.1), Err(DeformError::ZeroHolonomyInTranslationCase)));
    let chart = CurveChart::new(1.0, Holonomy::HalfTurn, [0.0; 2], vec![[0.1, 0.0]], vec![[0.0, 0.1]]).unwrap();
    assert!(matches!(TranslationDeformation::new(chart, 0.1), Err(DeformError::WrongHolonomyClass)));
}

#[test]
fn potential_certificate_parabola() {
    let delta = 4.0;
    let h = move |x: f64| (0.3 * x * (delta - x), 0.3 * (delta - 2.0 * x));
    let g = HessianPotential::new(&h, delta, (0.2, -0.1), 4096, 4096).unwrap();
    assert!(g.xi.residuals.iter().all(|&r| r <= 1e-10));
    let step = 1.0 / 32.0;
    let spec = GridSpec::rectangle(-1.0, 5.0, -1.0, 2.0, 193, 97).unwrap();
    let (_, cert) = g.certify(&h, &spec).unwrap();
    assert_eq!(cert.left_slab, 0.0);
    assert!(cert.right_slab <= 1e-10);
    assert!(cert.moment_defect <= 1e-10);
    assert!(cert.constant_mismatch <= 1e-10);
    assert!(cert.hessian_step == step && cert.hessian_on_curve <= 10.0 * step * step, "{cert:?}");
}

/// Distance from `(x, y)` to the curve `x = X(y)` by dense sampling in `y`.
fn graph_distance(x_of: impl Fn(f64) -> f64, (x, y): (f64, f64), reach: f64) -> f64 {
    let n = 4000;
    (0..=n)
        .map(|k| y - reach + 2.0 * reach * k as f64 / n as f64)
        .map(|t| ((x - x_of(t)).powi(2) + (y - t).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn check_wrapping(p: f64, amp: f64, h: f64, r: f64, defect_tol: f64) {
    let x_of = move |y: f64| amp * (2.0 * std::f64::consts::PI * y / p).cos();
    let half = ((amp + 1.0) / h).ceil();
    let spec = GridSpec::cylinder(-half * h, half * h, 0.0, p, 2 * half as usize + 1, (p / h).round() as usize).unwrap();
    let s = SurfaceData::from_fn(spec, |x, y| (x - x_of(y)).powi(2)).unwrap();
    let z = detect_z(&s, (2.0 * h) * (2.0 * h)).unwrap();
    assert_eq!(z.len(), 1);
    assert!(z[0].wraps);
    let prof = assemble_f(&s, &z, r).unwrap();
    let piece = &prof.pieces[0];
    assert_eq!(piece.kind, PieceKind::Wrapping);
    assert!(piece.alpha.is_some());
    let (step, defect) = piece.curve_hessian_defect.unwrap();
    assert!(step == h / 4.0 && defect < defect_tol, "{defect}");
    for (i, j) in spec.nodes() {
        let (x, y) = spec.xy(i, j);
        let v = prof.f.at(i, j);
        assert!(v.is_finite());
        let d = graph_distance(x_of, (x, y), 2.0 * r);
        if d > r + 2.0 * h {
            assert!(v.abs() < 1e-12, "f = {v} at distance {d}");
        }
        if d < r - 2.0 * h {
            assert!(v != 0.0, "f vanishes at distance {d} inside the tube");
        }
    }
}

#[test]
fn wrapping_wavy_curve_assembles() {
    check_wrapping(16.0, 4.0, 1.0 / 8.0, 0.4, 0.25);
}

#[test]
fn wrapping_steep_curve_fills_its_tube() {
    check_wrapping(8.0, 4.0, 1.0 / 32.0, 0.2, 1e-2);
}
