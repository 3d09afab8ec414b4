//! Subcommand implementations. Every command writes one JSON report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use minsurf::acceptance::{criterion_name, run_criterion, theorem_demo, AcceptanceConfig, CriterionReport, DemoRow, CRITERIA, DEMO_SWEEP};
use minsurf::deform::{assemble_f, detect_z, fourth_difference_bound, genericity_check, DeformError, PieceKind, XiProfile, ZComponent, ZKind};
use minsurf::geometry::{embedding_data, principal_at, SurfaceData};
use minsurf::grid::{GridError, GridSpec, ScalarField};
use minsurf::immersion::{forms_from_immersion, immerse, normal_flow};
use minsurf::invariant_ode::{blow_up_abscissa, estimate_delta, integrate, LengthCheck, OdeSettings};
use minsurf::io::{load_scalar, save_immersion, save_scalar, to_json, IoError};
use minsurf::pde::{invariant_boundary_value, solve_with_report, NewtonSettings, PdeError, PdeProblem};
use minsurf::variation::covariant_hessian;

use crate::{Command, DeformArgs, DemoArgs, FlowArgs, OdeArgs, SolveArgs, Failure, VerifyArgs, ZlocusArgs, SCHEMA_VERSION};

pub fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Ode(a) => ode(a),
        Command::Solve(a) => solve(a),
        Command::Zlocus(a) => zlocus(a),
        Command::Deform(a) => deform(a),
        Command::Flow(a) => flow(a),
        Command::Verify(a) => verify(a),
        Command::Demo(a) => demo(a),
    }
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    schema_version: u32,
    command: &'a str,
    passed: bool,
    #[serde(flatten)]
    report: R,
}

fn emit<R: Serialize>(command: &str, passed: bool, report: R, path: Option<&Path>) -> Result<(), Failure> {
    let text = to_json(&Envelope { schema_version: SCHEMA_VERSION, command, passed, report })?;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(Failure::Runtime),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn load_surface(path: &Path) -> Result<SurfaceData<f64>, Failure> {
    let u: ScalarField<f64> = load_scalar(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Runtime)?;
    Ok(SurfaceData::new(u))
}

#[derive(Serialize)]
struct OdeReport {
    v0: f64,
    tol: f64,
    delta: f64,
    delta_blow_up: f64,
    x_end: f64,
    n_samples: usize,
    residual_max: f64,
    residual_tol: f64,
    length_check: LengthCheck<f64>,
    samples_csv_path: Option<String>,
    surface_csv_path: Option<String>,
}

fn ode(a: OdeArgs) -> Result<(), Failure> {
    let settings = OdeSettings::with_tol(a.tol);
    let delta = estimate_delta(a.v0)?;
    let delta_blow_up = blow_up_abscissa(a.v0, &settings)?;
    let sol = integrate(a.v0, a.fraction * delta, &settings)?;
    let residual_max = sol.first_integral_residual();
    let residual_tol = a.residual_tol.unwrap_or(100.0 * a.tol);
    let length_check = sol.length_lower_bound_check();
    if let Some(p) = &a.csv {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display())).map_err(Failure::Runtime)?);
        writeln!(w, "x,g,dg")?;
        for s in &sol.samples {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", s.x, s.g, s.dg)?;
        }
        w.flush()?;
    }
    if let Some(p) = &a.surface_out {
        let n = (a.grid_half_width / a.grid_h).round().max(1.0) as usize;
        let w = n as f64 * a.grid_h;
        let spec = if a.periodic {
            GridSpec::new(2 * n + 1, 2 * n, a.grid_h, a.grid_h, (-w, 0.0), true).map_err(usage)?
        } else {
            GridSpec::centered(n, n, a.grid_h).map_err(usage)?
        };
        let s = sol.to_surface(spec).map_err(|e| Failure::Usage(format!("sampled grid: {e}")))?;
        save_scalar(p, &s.u)?;
    }
    let passed = residual_max <= residual_tol && length_check.holds;
    let report = OdeReport {
        v0: a.v0,
        tol: a.tol,
        delta,
        delta_blow_up,
        x_end: sol.x_end(),
        n_samples: sol.samples.len(),
        residual_max,
        residual_tol,
        length_check,
        samples_csv_path: path_str(&a.csv),
        surface_csv_path: path_str(&a.surface_out),
    };
    emit("ode", passed, report, a.json.as_deref())?;
    if !length_check.holds {
        return Err(Failure::Verification("length lower bound violated".into()));
    }
    if residual_max > residual_tol {
        return Err(Failure::Verification(format!("first-integral residual {residual_max:e} exceeds {residual_tol:e}")));
    }
    Ok(())
}

fn usage(e: GridError) -> Failure {
    Failure::Usage(e.to_string())
}

#[derive(Serialize)]
struct SolveReport {
    grid: GridSpec<f64>,
    v0: f64,
    width: f64,
    boundary_value: f64,
    converged: bool,
    iterations: usize,
    residual: f64,
    divergence: Option<String>,
    /// Sup distance to the invariant solution when the strip lies inside its domain.
    oracle_error: Option<f64>,
    out: String,
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let (nx, ny) = (a.nx as usize, a.ny as usize);
    let half = a.width / 2.0;
    let h = a.width / (nx - 1) as f64;
    let spec = GridSpec::new(nx, ny, h, h, (-half, 0.0), true).map_err(usage)?;
    let boundary_value = invariant_boundary_value(a.v0, half)?;
    let mut problem = PdeProblem::new(ScalarField::constant(spec, boundary_value));
    problem.newton = NewtonSettings { tol_residual: a.tol, max_iter: a.max_iter, damping: a.damping };
    let mut report = SolveReport {
        grid: spec,
        v0: a.v0,
        width: a.width,
        boundary_value,
        converged: false,
        iterations: 0,
        residual: f64::NAN,
        divergence: None,
        oracle_error: None,
        out: a.out.display().to_string(),
    };
    match solve_with_report(&problem) {
        Ok((s, newton)) => {
            save_scalar(&a.out, &s.u)?;
            report.converged = true;
            report.iterations = newton.iterations;
            report.residual = newton.final_residual();
            if half < estimate_delta(a.v0)? {
                let ode = integrate(a.v0, half, &OdeSettings::with_tol(1e-12))?;
                let mut err = 0.0f64;
                for (i, j) in spec.nodes() {
                    let g = ode.eval(spec.x(i)).map(|v| v.0).unwrap_or(f64::NAN);
                    err = err.max((s.u.at(i, j) - g).abs());
                }
                report.oracle_error = Some(err);
            }
            emit("solve", true, report, a.json.as_deref())
        }
        Err(e @ PdeError::NewtonDiverged { iter, residual }) => {
            report.iterations = iter;
            report.residual = residual;
            report.divergence = Some(e.to_string());
            emit("solve", false, report, a.json.as_deref())?;
            Err(Failure::Divergence(e.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct ComponentSummary {
    kind: ZKind,
    n_nodes: usize,
    closed: bool,
    wraps: bool,
    centroid: (f64, f64),
    line_deviation: f64,
    /// Outcome of the genericity gate for curves.
    generic: Option<Result<(), String>>,
    samples: Vec<(f64, f64)>,
}

impl ComponentSummary {
    fn new(c: &ZComponent<f64>) -> Self {
        let generic = (c.kind == ZKind::Curve).then(|| genericity_check(c, None).map_err(|e| e.to_string()));
        Self {
            kind: c.kind,
            n_nodes: c.nodes.len(),
            closed: c.closed,
            wraps: c.wraps,
            centroid: c.centroid,
            line_deviation: c.line_deviation,
            generic,
            samples: c.samples.clone(),
        }
    }
}

#[derive(Serialize)]
struct ZlocusReport {
    surface: String,
    grid: GridSpec<f64>,
    tol_z: f64,
    u_min: f64,
    components: Vec<ComponentSummary>,
}

fn detect(s: &SurfaceData<f64>, tol_z: f64) -> Result<Vec<ZComponent<f64>>, Failure> {
    detect_z(s, tol_z).map_err(|e| match e {
        DeformError::NotWeaklyBounded { .. } => Failure::Verification(e.to_string()),
        other => other.into(),
    })
}

fn zlocus(a: ZlocusArgs) -> Result<(), Failure> {
    let s = load_surface(&a.surface)?;
    let comps = detect(&s, a.tol_z)?;
    let report = ZlocusReport {
        surface: a.surface.display().to_string(),
        grid: *s.spec(),
        tol_z: a.tol_z,
        u_min: s.u.min(),
        components: comps.iter().map(ComponentSummary::new).collect(),
    };
    emit("zlocus", true, report, a.json.as_deref())
}

/// Leak bound relative to `1 + max |f|`.
const SUPPORT_LEAK_REL: f64 = 1e-12;

#[derive(Serialize)]
struct PieceCertificate {
    case: PieceKind,
    centroid: (f64, f64),
    z_nodes: usize,
    /// Max over Z-nodes of |∇df(e₊, e₊) + 1|.
    sign_residual_plus: f64,
    /// Max over Z-nodes of |∇df(e₋, e₋) − 1|.
    sign_residual_minus: f64,
    /// `(step, defect)` of the off-grid Hessian check along wrapping curves.
    curve_hessian_defect: Option<(f64, f64)>,
    /// The residual held to `sign_tol`: the curve defect for wrapping curves, the
    /// grid residuals otherwise.
    sign_residual: f64,
    xi: Option<XiProfile<f64>>,
    alpha: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct DeformCertificate {
    surface: String,
    out: String,
    r: f64,
    tol_z: f64,
    sign_tol: f64,
    /// Max |f| at nodes farther than r + 2h from Z.
    support_leak: f64,
    support_leak_tol: f64,
    /// Largest scaled fourth differences of f along x and y.
    fourth_difference: (f64, f64),
    pieces: Vec<PieceCertificate>,
}

fn deform(a: DeformArgs) -> Result<(), Failure> {
    let s = load_surface(&a.surface)?;
    let spec = *s.spec();
    let comps = detect(&s, a.tol_z)?;
    let profile = assemble_f(&s, &comps, a.r).map_err(|e| Failure::Verification(e.to_string()))?;
    save_scalar(&a.out, &profile.f)?;

    let shifts: Vec<f64> = spec.period_y().map(|p| vec![-p, 0.0, p]).unwrap_or_else(|| vec![0.0]);
    // the fitted curve of a wrapping component sits within O(h) of its samples
    let slack = 2.0 * spec.h_max();
    let mut support_leak = 0.0f64;
    for (i, j) in spec.nodes() {
        let (x, y) = spec.xy(i, j);
        let d = comps
            .iter()
            .flat_map(|c| shifts.iter().map(move |&sh| c.distance((x, y + sh))))
            .fold(f64::INFINITY, f64::min);
        if d > a.r + slack {
            support_leak = support_leak.max(profile.f.at(i, j).abs());
        }
    }

    let data = embedding_data(&s);
    let hess = covariant_hessian(&s, &profile.f).map_err(|e| Failure::Runtime(e.into()))?;
    let mut pieces = Vec::new();
    for (comp, piece) in comps.iter().zip(&profile.pieces) {
        let (mut rp, mut rm) = (0.0f64, 0.0f64);
        let mut count = 0;
        for &(i, j) in &comp.nodes {
            if !spec.is_interior(i, j) {
                continue;
            }
            let frame = principal_at(&data.shape.at(i, j), Some(&data.first.at(i, j))).ok().and_then(|p| p.frame);
            let Some((ep, em)) = frame else { continue };
            let h = hess.at(i, j);
            rp = rp.max((h.form(ep, ep) + 1.0).abs());
            rm = rm.max((h.form(em, em) - 1.0).abs());
            count += 1;
        }
        let sign_residual = match piece.curve_hessian_defect {
            Some((_, d)) => d,
            None => rp.max(rm),
        };
        pieces.push(PieceCertificate {
            case: piece.kind,
            centroid: piece.centroid,
            z_nodes: count,
            sign_residual_plus: rp,
            sign_residual_minus: rm,
            curve_hessian_defect: piece.curve_hessian_defect,
            sign_residual,
            xi: piece.xi.clone(),
            alpha: piece.alpha,
        });
    }
    let leak_tol = SUPPORT_LEAK_REL * (1.0 + profile.f.sup_norm());
    let worst = pieces.iter().map(|p| p.sign_residual).fold(0.0, f64::max);
    let passed = worst <= a.sign_tol && support_leak <= leak_tol;
    let cert = DeformCertificate {
        surface: a.surface.display().to_string(),
        out: a.out.display().to_string(),
        r: a.r,
        tol_z: a.tol_z,
        sign_tol: a.sign_tol,
        support_leak,
        support_leak_tol: leak_tol,
        fourth_difference: fourth_difference_bound(&profile.f),
        pieces,
    };
    emit("deform", passed, cert, a.json.as_deref())?;
    if worst > a.sign_tol {
        return Err(Failure::Verification(format!("sign residual {worst:e} exceeds {:e}", a.sign_tol)));
    }
    if support_leak > leak_tol {
        return Err(Failure::Verification(format!("|f| = {support_leak:e} at distance > r + 2h from Z")));
    }
    Ok(())
}

#[derive(Serialize)]
struct FlowReport {
    surface: String,
    f: Option<String>,
    t: f64,
    out: String,
    constraint_drift: f64,
    drift_tol: f64,
    /// Extremes of the principal curvatures over nodes two away from the edges.
    max_lambda_plus: f64,
    min_lambda_minus: f64,
    /// Nodes where the principal curvatures are not real.
    complex_nodes: usize,
}

fn flow(a: FlowArgs) -> Result<(), Failure> {
    let s = load_surface(&a.surface)?;
    let spec = *s.spec();
    let f = match &a.f {
        Some(p) => {
            let f: ScalarField<f64> = load_scalar(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::Runtime)?;
            if f.spec() != &spec {
                return Err(Failure::Usage("surface and f live on different grids".into()));
            }
            f
        }
        None => ScalarField::constant(spec, 1.0),
    };
    let g = immerse(&s)?;
    let flowed = normal_flow(&g, &f, a.t)?;
    save_immersion(&a.out, &flowed)?;
    let rec = forms_from_immersion(&flowed)?;
    let (mut lp, mut lm, mut complex) = (f64::NEG_INFINITY, f64::INFINITY, 0usize);
    for (i, j) in spec.inner_nodes(2) {
        match principal_at(&rec.shape.at(i, j), Some(&rec.first.at(i, j))) {
            Ok(p) => {
                lp = lp.max(p.plus);
                lm = lm.min(p.minus);
            }
            Err(_) => complex += 1,
        }
    }
    let drift = flowed.constraint_drift();
    let passed = drift <= a.drift_tol;
    let report = FlowReport {
        surface: a.surface.display().to_string(),
        f: path_str(&a.f),
        t: a.t,
        out: a.out.display().to_string(),
        constraint_drift: drift,
        drift_tol: a.drift_tol,
        max_lambda_plus: lp,
        min_lambda_minus: lm,
        complex_nodes: complex,
    };
    emit("flow", passed, report, a.json.as_deref())?;
    if !passed {
        return Err(Failure::Verification(format!("constraint drift {drift:e} exceeds {:e}", a.drift_tol)));
    }
    Ok(())
}

#[derive(Serialize)]
struct InputCheck {
    path: String,
    invariant: &'static str,
    passed: bool,
    detail: Option<String>,
}

#[derive(Serialize)]
struct VerifyReport {
    config: AcceptanceConfig,
    input: Option<InputCheck>,
    criteria: Vec<CriterionReport>,
    first_failure: Option<String>,
}

fn check_input(path: &Path) -> Result<InputCheck, Failure> {
    let mut check = InputCheck { path: path.display().to_string(), invariant: "finite-values", passed: true, detail: None };
    match load_scalar::<f64>(path) {
        Ok(_) => {}
        Err(IoError::Grid(e @ GridError::NonFinite { .. })) => {
            check.passed = false;
            check.detail = Some(e.to_string());
        }
        Err(e) => return Err(Failure::Runtime(anyhow::Error::new(e).context(format!("reading {}", path.display())))),
    }
    Ok(check)
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let config = AcceptanceConfig { refine: u32::from(a.halve_grid), seed: a.seed };
    let input = a.surface.as_deref().map(check_input).transpose()?;
    let ids: Vec<u8> = if a.criteria.is_empty() { (1..=CRITERIA).collect() } else { a.criteria.clone() };
    let mut criteria = Vec::new();
    if input.as_ref().map_or(true, |c| c.passed) {
        for id in ids {
            log::info!("criterion {id} ({})", criterion_name(id));
            let rep = run_criterion(id, &config);
            eprintln!("{}", rep.line());
            criteria.push(rep);
        }
    }
    let first_failure = match &input {
        Some(c) if !c.passed => Some(format!("finite-values invariant violated by {}: {}", c.path, c.detail.as_deref().unwrap_or(""))),
        _ => criteria.iter().find(|r| !r.passed).map(|r| format!("criterion {} ({})", r.id, r.name)),
    };
    let passed = first_failure.is_none();
    emit("verify", passed, VerifyReport { config, input, criteria, first_failure: first_failure.clone() }, a.json.as_deref())?;
    match first_failure {
        Some(m) => Err(Failure::Verification(m)),
        None => Ok(()),
    }
}

/// Flow time of the centre check.
const DEMO_PROBE_T: f64 = 1e-3;

#[derive(Serialize)]
struct DemoCheck {
    name: String,
    value: f64,
    bound: String,
    passed: bool,
}

#[derive(Serialize)]
struct DemoSummary {
    h: f64,
    r: f64,
    rows: Vec<DemoRow>,
    slope: f64,
    slope_tau: f64,
    checks: Vec<DemoCheck>,
}

fn demo(a: DemoArgs) -> Result<(), Failure> {
    let mut ts = vec![-DEMO_PROBE_T, 0.0];
    ts.extend(DEMO_SWEEP);
    let rep = theorem_demo(&ts, a.h).map_err(|e| Failure::Runtime(anyhow::anyhow!("{e}")))?;
    let row = |t: f64| rep.rows.iter().find(|r| r.t == t).copied().expect("swept time");
    let check = |name: &str, value: f64, bound: String, passed: bool| DemoCheck { name: name.into(), value, bound, passed };
    let mut checks = vec![
        check("slope dλ+/dt at the centre", rep.slope, "-1 ± 1e-2".into(), (rep.slope + 1.0).abs() <= 1e-2),
        check("λ+ at the centre, t = 0", row(0.0).lambda_plus_centre, "1 ± 1e-5".into(), (row(0.0).lambda_plus_centre - 1.0).abs() <= 1e-5),
        check(
            "λ+ at the centre, t = 1e-3",
            row(DEMO_PROBE_T).lambda_plus_centre,
            "1 - 1e-3 ± 1e-5".into(),
            (row(DEMO_PROBE_T).lambda_plus_centre - (1.0 - DEMO_PROBE_T)).abs() <= 1e-5,
        ),
        check("λ+ at the centre, t = -1e-3", row(-DEMO_PROBE_T).lambda_plus_centre, "> 1".into(), row(-DEMO_PROBE_T).lambda_plus_centre > 1.0),
    ];
    for r in rep.rows.iter().filter(|r| r.t > 0.0) {
        checks.push(check(&format!("max λ+ on the plateau, t = {:e}", r.t), r.max_lambda_plus_plateau, "< 1".into(), r.max_lambda_plus_plateau < 1.0));
    }
    let first = checks.iter().find(|c| !c.passed).map(|c| format!("{} = {:e} (expected {})", c.name, c.value, c.bound));
    let summary = DemoSummary { h: rep.h, r: rep.r, rows: rep.rows.clone(), slope: rep.slope, slope_tau: rep.slope_tau, checks };
    emit("demo", first.is_none(), summary, a.json.as_deref())?;
    match first {
        Some(m) => Err(Failure::Verification(m)),
        None => Ok(()),
    }
}
