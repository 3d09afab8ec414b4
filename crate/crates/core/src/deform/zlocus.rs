//! Detection of the locus `Z = {u = 0}` on grid data and its point/curve
//! classification.

use std::collections::VecDeque;

use serde::Serialize;

use super::DeformError;
use crate::geometry::SurfaceData;
use crate::grid::GridSpec;
use crate::scalar::{c, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZKind {
    Point,
    Curve,
}

/// One connected component of `{u ≤ tol_Z}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZComponent<T> {
    pub kind: ZKind,
    pub nodes: Vec<(usize, usize)>,
    /// Ordered polyline in flat coordinates; y is unwrapped on cylinders so that the
    /// chain is continuous. A single centroid sample for points.
    pub samples: Vec<(T, T)>,
    pub closed: bool,
    /// The component winds around a periodic chart.
    pub wraps: bool,
    /// Largest distance of a sample from the total-least-squares line.
    pub line_deviation: T,
    pub centroid: (T, T),
    /// Grid scale the component was detected at.
    pub h: T,
}

impl<T: Real> ZComponent<T> {
    /// A curve component given directly by samples (no grid nodes).
    pub fn curve_from_samples(samples: Vec<(T, T)>, closed: bool, h: T) -> Self {
        let centroid = centroid(&samples);
        Self {
            kind: ZKind::Curve,
            nodes: Vec::new(),
            line_deviation: line_deviation(&samples),
            samples,
            closed,
            wraps: false,
            centroid,
            h,
        }
    }

    /// Euclidean distance from `p` to the component (polyline segments for curves).
    pub fn distance(&self, p: (T, T)) -> T {
        polyline_distance(&self.samples, self.closed && !self.wraps, p)
    }
}

fn centroid<T: Real>(pts: &[(T, T)]) -> (T, T) {
    let n = T::from_usize_lossy(pts.len().max(1));
    let (sx, sy) = pts.iter().fold((T::zero(), T::zero()), |(a, b), p| (a + p.0, b + p.1));
    (sx / n, sy / n)
}

/// Max distance of the points from their total-least-squares line.
pub fn line_deviation<T: Real>(pts: &[(T, T)]) -> T {
    if pts.len() < 3 {
        return T::zero();
    }
    let (mx, my) = centroid(pts);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pts {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // principal direction of the scatter matrix
    let theta = c::<T>(0.5) * (c::<T>(2.0) * sxy).atan2(sxx - syy);
    let (nx, ny) = (-theta.sin(), theta.cos());
    pts.iter().fold(T::zero(), |m, &(x, y)| m.max(((x - mx) * nx + (y - my) * ny).abs()))
}

fn segment_distance<T: Real>(a: (T, T), b: (T, T), p: (T, T)) -> T {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).max(T::zero()).min(T::one()) } else { T::zero() };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

pub(crate) fn polyline_distance<T: Real>(pts: &[(T, T)], closed: bool, p: (T, T)) -> T {
    match pts.len() {
        0 => T::infinity(),
        1 => segment_distance(pts[0], pts[0], p),
        n => {
            let mut d = T::infinity();
            for k in 0..n - 1 {
                d = d.min(segment_distance(pts[k], pts[k + 1], p));
            }
            if closed {
                d = d.min(segment_distance(pts[n - 1], pts[0], p));
            }
            d
        }
    }
}

/// Connected components (8-neighbour, wrapping on cylinders) of `{u ≤ tol_z}`.
///
/// Components of diameter at most `3·h_max` are points; larger ones are curves,
/// ordered by a greedy nearest-neighbour walk.
pub fn detect_z<T: Real>(s: &SurfaceData<T>, tol_z: T) -> Result<Vec<ZComponent<T>>, DeformError> {
    if !s.weakly_bounded() {
        return Err(DeformError::NotWeaklyBounded { min: s.u.min().as_f64() });
    }
    let spec = *s.spec();
    let inside: Vec<bool> = s.u.values().iter().map(|&v| v <= tol_z).collect();
    let mut seen: Vec<Option<isize>> = vec![None; spec.len()];
    let mut out = Vec::new();
    for start in 0..spec.len() {
        if !inside[start] || seen[start].is_some() {
            continue;
        }
        let (i0, j0) = spec.ij(start);
        seen[start] = Some(j0 as isize);
        let mut queue = VecDeque::from([(i0, j0 as isize)]);
        let mut members = Vec::new();
        let mut wraps = false;
        while let Some((i, uj)) = queue.pop_front() {
            members.push((i, uj));
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ii = i as isize + di;
                    let nj = uj + dj;
                    if ii < 0 || ii >= spec.nx as isize {
                        continue;
                    }
                    let jj = if spec.periodic_y {
                        nj.rem_euclid(spec.ny as isize)
                    } else if nj < 0 || nj >= spec.ny as isize {
                        continue;
                    } else {
                        nj
                    };
                    let k = spec.idx(ii as usize, jj as usize);
                    if !inside[k] {
                        continue;
                    }
                    match seen[k] {
                        None => {
                            seen[k] = Some(nj);
                            queue.push_back((ii as usize, nj));
                        }
                        Some(prev) if prev != nj => wraps = true,
                        _ => {}
                    }
                }
            }
        }
        out.push(classify(&spec, members, wraps));
    }
    Ok(out)
}

fn classify<T: Real>(spec: &GridSpec<T>, members: Vec<(usize, isize)>, wraps: bool) -> ZComponent<T> {
    let h = spec.h_max();
    let pos = |&(i, uj): &(usize, isize)| (spec.x(i), spec.origin.1 + c::<T>(uj as f64) * spec.hy);
    let pts: Vec<(T, T)> = members.iter().map(pos).collect();
    let nodes: Vec<(usize, usize)> =
        members.iter().map(|&(i, uj)| (i, uj.rem_euclid(spec.ny as isize) as usize)).collect();
    let cen = centroid(&pts);
    let mut diameter = T::zero();
    for a in &pts {
        for b in &pts {
            diameter = diameter.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    if !wraps && diameter <= c::<T>(3.0) * h {
        return ZComponent {
            kind: ZKind::Point,
            nodes,
            samples: vec![cen],
            closed: false,
            wraps: false,
            line_deviation: T::zero(),
            centroid: cen,
            h,
        };
    }
    let chain = greedy_chain(&pts, cen, wraps, h);
    let closed = wraps || (chain.len() > 4 && {
        let (a, b) = (chain[0], chain[chain.len() - 1]);
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() <= c::<T>(2.0) * h
    });
    ZComponent {
        kind: ZKind::Curve,
        nodes,
        line_deviation: line_deviation(&chain),
        samples: chain,
        closed,
        wraps,
        centroid: cen,
        h,
    }
}

/// Wrapping components are treated as graphs over y (one mean sample per row);
/// others are ordered by a nearest-neighbour walk that absorbs points within
/// `1.5h` of the walker and stops once the nearest remaining point is farther
/// than `3h`.
fn greedy_chain<T: Real>(pts: &[(T, T)], cen: (T, T), wraps: bool, h: T) -> Vec<(T, T)> {
    if wraps {
        let mut rows: std::collections::BTreeMap<i64, (T, T, usize)> = Default::default();
        for &(x, y) in pts {
            let key = (y / h).round().to_i64().unwrap_or(0);
            let e = rows.entry(key).or_insert((T::zero(), y, 0));
            e.0 += x;
            e.2 += 1;
        }
        let mut out: Vec<(T, T)> = rows.values().map(|&(sx, y, n)| (sx / T::from_usize_lossy(n), y)).collect();
        out.dedup_by(|a, b| (a.1 - b.1).abs() < h * c::<T>(0.5));
        return out;
    }
    let d2 = |a: (T, T), b: (T, T)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let start = (0..pts.len()).max_by(|&a, &b| d2(pts[a], cen).partial_cmp(&d2(pts[b], cen)).unwrap()).unwrap();
    let absorb = c::<T>(2.25) * h * h;
    let stop = c::<T>(9.0) * h * h;
    let mut used = vec![false; pts.len()];
    let mut chain = Vec::new();
    let mut cur = start;
    loop {
        used[cur] = true;
        chain.push(pts[cur]);
        let next = (0..pts.len())
            .filter(|&k| !used[k])
            .min_by(|&a, &b| d2(pts[a], pts[cur]).partial_cmp(&d2(pts[b], pts[cur])).unwrap());
        let Some(next) = next else { break };
        if d2(pts[next], pts[cur]) > stop {
            break;
        }
        for k in 0..pts.len() {
            if k != next && !used[k] && d2(pts[k], pts[cur]) < absorb {
                used[k] = true;
            }
        }
        cur = next;
    }
    chain
}

/// `Ok` iff the curve deviates from its best-fit line by more than `tol_line`
/// (default `10·h²`).
pub fn genericity_check<T: Real>(comp: &ZComponent<T>, tol_line: Option<T>) -> Result<(), DeformError> {
    if comp.kind != ZKind::Curve {
        return Err(DeformError::NotACurve);
    }
    let tol = tol_line.unwrap_or(c::<T>(10.0) * comp.h * comp.h);
    if comp.line_deviation > tol {
        Ok(())
    } else {
        Err(DeformError::NonGenericCurve { deviation: comp.line_deviation.as_f64(), tol: tol.as_f64() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;

    #[test]
    fn isolated_zero_is_a_point() {
        let spec = GridSpec::<f64>::centered(10, 10, 0.05).unwrap();
        let s = SurfaceData::from_fn(spec, |x, y| x * x + y * y).unwrap();
        let z = detect_z(&s, 1e-8).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].kind, ZKind::Point);
        assert!(z[0].centroid.0.abs() < 1e-12 && z[0].centroid.1.abs() < 1e-12);
    }

    #[test]
    fn empty_locus() {
        let spec = GridSpec::<f64>::centered(4, 4, 0.1).unwrap();
        let s = SurfaceData::new(ScalarField::constant(spec, 0.5));
        assert!(detect_z(&s, 1e-8).unwrap().is_empty());
    }

    #[test]
    fn wrapping_line_on_cylinder() {
        let spec = GridSpec::<f64>::cylinder(-0.5, 0.5, 0.0, 1.0, 21, 16).unwrap();
        let s = SurfaceData::from_fn(spec, |x, _| x * x).unwrap();
        let z = detect_z(&s, 1e-8).unwrap();
        assert_eq!(z.len(), 1);
        assert!(z[0].wraps && z[0].closed);
        assert_eq!(z[0].samples.len(), 16);
        assert!(z[0].line_deviation < 1e-12);
        assert!(genericity_check(&z[0], None).is_err());
    }

    #[test]
    fn thick_band_collapses() {
        let spec = GridSpec::<f64>::cylinder(-0.5, 0.5, 0.0, 1.0, 41, 40).unwrap();
        let s = SurfaceData::from_fn(spec, |x, _| x * x).unwrap();
        let z = detect_z(&s, 0.026f64.powi(2)).unwrap();
        assert_eq!(z.len(), 1);
        let chain = &z[0].samples;
        assert_eq!(chain.len(), 40);
        for w in chain.windows(2) {
            assert!(w[1].1 > w[0].1, "chain goes back: {:?}", w);
            assert!(w[1].0.abs() < 1e-12);
        }
    }

    #[test]
    fn open_arc_is_ordered() {
        let spec = GridSpec::<f64>::rectangle(-0.5, 0.5, -0.5, 0.5, 41, 41).unwrap();
        let s = SurfaceData::from_fn(spec, |x, y| if y.abs() <= 0.3 { x * x } else { x * x + (y.abs() - 0.3) }).unwrap();
        let z = detect_z(&s, 1e-8).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].kind, ZKind::Curve);
        assert!(!z[0].closed && !z[0].wraps);
        assert_eq!(z[0].samples.len(), 25);
        assert!((z[0].samples[0].1.abs() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn parabola_samples_are_generic() {
        let pts: Vec<(f64, f64)> = (0..=50).map(|k| k as f64 / 50.0).map(|x| (x, 0.1 * x * (1.0 - x))).collect();
        let c = ZComponent::curve_from_samples(pts, false, 0.02);
        assert!(genericity_check(&c, None).is_ok());
        let line: Vec<(f64, f64)> = (0..=50).map(|k| k as f64 / 50.0).map(|x| (x, 0.3 * x - 2.0)).collect();
        let c = ZComponent::curve_from_samples(line, false, 0.02);
        assert!(matches!(genericity_check(&c, None), Err(DeformError::NonGenericCurve { .. })));
    }

    #[test]
    fn rejects_negative_exponent() {
        let spec = GridSpec::<f64>::centered(4, 4, 0.1).unwrap();
        let s = SurfaceData::new(ScalarField::constant(spec, -0.1));
        assert!(matches!(detect_z(&s, 1e-8), Err(DeformError::NotWeaklyBounded { .. })));
    }
}
