//! CSV and JSON serialisation of grid fields.
//!
//! Every CSV starts with a `# {grid spec json}` comment line, followed by a header
//! and one row per node in row-major order (x fastest). Values are written with
//! `{:.16e}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridError, GridSpec, Mat2, OperatorField, ScalarField};
use crate::immersion::{ImmersionError, ImmersionGrid, MinkowskiVec};
use crate::scalar::Real;

pub const SCALAR_HEADER: [&str; 3] = ["x", "y", "v"];
pub const OPERATOR_HEADER: [&str; 6] = ["x", "y", "a11", "a12", "a21", "a22"];
pub const IMMERSION_HEADER: [&str; 10] = ["x", "y", "sigma_t", "sigma_1", "sigma_2", "sigma_3", "nu_t", "nu_1", "nu_2", "nu_3"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("grid spec line: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing `# {{grid spec}}` first line")]
    MissingSpec,
    #[error("header {got:?} does not match {expected:?}")]
    BadHeader { expected: Vec<String>, got: Vec<String> },
    #[error("row {row}: cannot parse {value:?}")]
    BadNumber { row: usize, value: String },
    #[error("row {row}: coordinates ({x}, {y}) do not match the grid spec")]
    CoordinateMismatch { row: usize, x: f64, y: f64 },
    #[error("expected {expected} rows, got {got}")]
    RowCount { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Immersion(#[from] ImmersionError),
}

fn write_table<T: Real + Serialize, W: Write>(
    mut w: W,
    spec: &GridSpec<T>,
    header: &[&str],
    row: impl Fn(usize) -> Vec<T>,
) -> Result<(), IoError> {
    writeln!(w, "# {}", serde_json::to_string(spec)?)?;
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for k in 0..spec.len() {
        let (i, j) = spec.ij(k);
        let (x, y) = spec.xy(i, j);
        line.clear();
        line.push_str(&format!("{:.16e},{:.16e}", x, y));
        for v in row(k) {
            line.push_str(&format!(",{:.16e}", v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<T: Real + for<'de> serde::Deserialize<'de>, R: Read>(
    r: R,
    header: &[&str],
) -> Result<(GridSpec<T>, Vec<Vec<T>>), IoError> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let json = first.trim_end().strip_prefix('#').ok_or(IoError::MissingSpec)?.trim();
    let spec: GridSpec<T> = serde_json::from_str(json)?;
    let spec = GridSpec::new(spec.nx, spec.ny, spec.hx, spec.hy, spec.origin, spec.periodic_y)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(IoError::BadHeader { expected: header.iter().map(|s| s.to_string()).collect(), got });
    }
    let scale = T::one() + spec.x_range().1.abs().max(spec.x_range().0.abs()) + spec.y_range().1.abs().max(spec.y_range().0.abs());
    let tol = T::lit(1e-9) * scale;
    let mut rows = Vec::with_capacity(spec.len());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = Vec::with_capacity(header.len());
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| IoError::BadNumber { row: k, value: field.to_owned() })?;
            vals.push(T::from_f64(v).ok_or(IoError::BadNumber { row: k, value: field.to_owned() })?);
        }
        if vals.len() != header.len() {
            return Err(IoError::BadNumber { row: k, value: rec.iter().collect::<Vec<_>>().join(",") });
        }
        if k < spec.len() {
            let (x, y) = spec.xy(spec.ij(k).0, spec.ij(k).1);
            if (vals[0] - x).abs() > tol || (vals[1] - y).abs() > tol {
                return Err(IoError::CoordinateMismatch { row: k, x: vals[0].as_f64(), y: vals[1].as_f64() });
            }
        }
        rows.push(vals.split_off(2));
    }
    if rows.len() != spec.len() {
        return Err(IoError::RowCount { expected: spec.len(), got: rows.len() });
    }
    Ok((spec, rows))
}

pub fn write_scalar<T: Real + Serialize, W: Write>(w: W, f: &ScalarField<T>) -> Result<(), IoError> {
    write_table(w, f.spec(), &SCALAR_HEADER, |k| vec![f.values()[k]])
}

pub fn read_scalar<T: Real + for<'de> serde::Deserialize<'de>, R: Read>(r: R) -> Result<ScalarField<T>, IoError> {
    let (spec, rows) = read_table(r, &SCALAR_HEADER)?;
    Ok(ScalarField::new(spec, rows.into_iter().map(|v| v[0]).collect())?)
}

pub fn write_operator<T: Real + Serialize, W: Write>(w: W, f: &OperatorField<T>) -> Result<(), IoError> {
    write_table(w, f.spec(), &OPERATOR_HEADER, |k| {
        let m = f.values()[k];
        vec![m.a11, m.a12, m.a21, m.a22]
    })
}

pub fn read_operator<T: Real + for<'de> serde::Deserialize<'de>, R: Read>(r: R) -> Result<OperatorField<T>, IoError> {
    let (spec, rows) = read_table(r, &OPERATOR_HEADER)?;
    Ok(OperatorField::new(spec, rows.into_iter().map(|v| Mat2::new(v[0], v[1], v[2], v[3])).collect())?)
}

pub fn write_immersion<T: Real + Serialize, W: Write>(w: W, g: &ImmersionGrid<T>) -> Result<(), IoError> {
    write_table(w, g.spec(), &IMMERSION_HEADER, |k| {
        let (s, n) = (g.positions()[k].0, g.normals()[k].0);
        vec![s[0], s[1], s[2], s[3], n[0], n[1], n[2], n[3]]
    })
}

pub fn read_immersion<T: Real + for<'de> serde::Deserialize<'de>, R: Read>(r: R) -> Result<ImmersionGrid<T>, IoError> {
    let (spec, rows) = read_table(r, &IMMERSION_HEADER)?;
    let sigma = rows.iter().map(|v| MinkowskiVec([v[0], v[1], v[2], v[3]])).collect();
    let nu = rows.iter().map(|v| MinkowskiVec([v[4], v[5], v[6], v[7]])).collect();
    Ok(ImmersionGrid::new(spec, sigma, nu)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn save_scalar<T: Real + Serialize>(path: impl AsRef<Path>, f: &ScalarField<T>) -> Result<(), IoError> {
    write_scalar(create(path.as_ref())?, f)
}

pub fn load_scalar<T: Real + for<'de> serde::Deserialize<'de>>(path: impl AsRef<Path>) -> Result<ScalarField<T>, IoError> {
    read_scalar(File::open(path)?)
}

pub fn save_operator<T: Real + Serialize>(path: impl AsRef<Path>, f: &OperatorField<T>) -> Result<(), IoError> {
    write_operator(create(path.as_ref())?, f)
}

pub fn load_operator<T: Real + for<'de> serde::Deserialize<'de>>(path: impl AsRef<Path>) -> Result<OperatorField<T>, IoError> {
    read_operator(File::open(path)?)
}

pub fn save_immersion<T: Real + Serialize>(path: impl AsRef<Path>, g: &ImmersionGrid<T>) -> Result<(), IoError> {
    write_immersion(create(path.as_ref())?, g)
}

pub fn load_immersion<T: Real + for<'de> serde::Deserialize<'de>>(path: impl AsRef<Path>) -> Result<ImmersionGrid<T>, IoError> {
    read_immersion(File::open(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize>(v: &S) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
