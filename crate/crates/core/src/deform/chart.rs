//! Developing curves of a tubular neighbourhood of a component of Z and the
//! Fermi-type chart `dev(t, s) = ζ(t) + s·n(t)`.

use serde::Serialize;

use super::DeformError;
use crate::scalar::{c, Real};

/// Holonomy of the flat structure around a closed curve of Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Holonomy<T> {
    Trivial,
    /// `(x, y) ↦ (−x, −y)`.
    HalfTurn,
    /// `(x, y) ↦ (x + c₁, y + c₂)`.
    Translation(T, T),
}

/// Developing curve `ζ : ℝ → ℝ²` with `ζ(t + L) = hol(ζ(t))`.
///
/// The curve is `offset + (t/L)·drift + Σ aₖ cos ωₖt + bₖ sin ωₖt` with
/// `ωₖ = 2πk/L` for trivial and translation holonomy and `ωₖ = (2k − 1)π/L` for
/// the half turn (so only odd harmonics of `π/L` appear and the offset is zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveChart<T> {
    pub period: T,
    pub holonomy: Holonomy<T>,
    pub offset: [T; 2],
    pub cos: Vec<[T; 2]>,
    pub sin: Vec<[T; 2]>,
}

impl<T: Real> CurveChart<T> {
    pub fn new(period: T, holonomy: Holonomy<T>, offset: [T; 2], cos: Vec<[T; 2]>, sin: Vec<[T; 2]>) -> Result<Self, DeformError> {
        if !(period > T::zero()) || cos.len() != sin.len() {
            return Err(DeformError::BadChart);
        }
        let offset = if holonomy == Holonomy::HalfTurn { [T::zero(); 2] } else { offset };
        Ok(Self { period, holonomy, offset, cos, sin })
    }

    fn omega(&self, k: usize) -> T {
        let pl = T::PI() / self.period;
        match self.holonomy {
            Holonomy::HalfTurn => c::<T>((2 * k + 1) as f64) * pl,
            _ => c::<T>(2.0 * (k + 1) as f64) * pl,
        }
    }

    fn drift(&self) -> [T; 2] {
        match self.holonomy {
            Holonomy::Translation(a, b) => [a, b],
            _ => [T::zero(); 2],
        }
    }

    /// `(ζ, ζ', ζ'')` at `t`.
    pub fn jet(&self, t: T) -> ([T; 2], [T; 2], [T; 2]) {
        let d = self.drift();
        let mut p = [self.offset[0] + t / self.period * d[0], self.offset[1] + t / self.period * d[1]];
        let mut dp = [d[0] / self.period, d[1] / self.period];
        let mut ddp = [T::zero(); 2];
        for k in 0..self.cos.len() {
            let w = self.omega(k);
            let (s, co) = (w * t).sin_cos();
            for a in 0..2 {
                let (ca, sa) = (self.cos[k][a], self.sin[k][a]);
                p[a] += ca * co + sa * s;
                dp[a] += w * (sa * co - ca * s);
                ddp[a] -= w * w * (ca * co + sa * s);
            }
        }
        (p, dp, ddp)
    }

    pub fn zeta(&self, t: T) -> [T; 2] {
        self.jet(t).0
    }

    /// Unit normal `J ζ'/|ζ'|` (rotation by +90°) and its t-derivative.
    pub fn normal(&self, t: T) -> ([T; 2], [T; 2]) {
        let (_, d, dd) = self.jet(t);
        let speed = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let tang = [d[0] / speed, d[1] / speed];
        let proj = (d[0] * dd[0] + d[1] * dd[1]) / (speed * speed * speed);
        let dtang = [dd[0] / speed - d[0] * proj, dd[1] / speed - d[1] * proj];
        ([-tang[1], tang[0]], [-dtang[1], dtang[0]])
    }

    pub fn dev(&self, t: T, s: T) -> [T; 2] {
        let z = self.zeta(t);
        let (n, _) = self.normal(t);
        [z[0] + s * n[0], z[1] + s * n[1]]
    }

    /// Newton inversion of `dev` near the guess `(t, s)`.
    pub fn dev_inverse(&self, z: [T; 2], guess: (T, T)) -> Option<(T, T)> {
        let (mut t, mut s) = guess;
        let tol = T::epsilon().sqrt() * T::epsilon().sqrt() * c::<T>(64.0) * (T::one() + z[0].abs() + z[1].abs());
        for _ in 0..50 {
            let (p, d, _) = self.jet(t);
            let (n, dn) = self.normal(t);
            let r = [p[0] + s * n[0] - z[0], p[1] + s * n[1] - z[1]];
            let ct = [d[0] + s * dn[0], d[1] + s * dn[1]];
            let det = ct[0] * n[1] - ct[1] * n[0];
            if det.abs() <= T::epsilon() {
                return None;
            }
            let dt = (r[0] * n[1] - r[1] * n[0]) / det;
            let ds = (ct[0] * r[1] - ct[1] * r[0]) / det;
            t -= dt;
            s -= ds;
            if dt.abs() + ds.abs() <= tol {
                return Some((t, s));
            }
        }
        None
    }

    /// Apply the holonomy `k` times to a point.
    pub fn holonomy_apply(&self, z: [T; 2], k: i64) -> [T; 2] {
        match self.holonomy {
            Holonomy::Trivial => z,
            Holonomy::HalfTurn if k.rem_euclid(2) == 1 => [-z[0], -z[1]],
            Holonomy::HalfTurn => z,
            Holonomy::Translation(a, b) => {
                let k = c::<T>(k as f64);
                [z[0] + k * a, z[1] + k * b]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wavy(h: Holonomy<f64>) -> CurveChart<f64> {
        CurveChart::new(2.0, h, [0.1, -0.2], vec![[0.3, 0.05], [0.02, 0.0]], vec![[0.0, 0.3], [0.01, 0.03]]).unwrap()
    }

    #[test]
    fn holonomy_relation() {
        for h in [Holonomy::Trivial, Holonomy::HalfTurn, Holonomy::Translation(1.5, -0.5)] {
            let ch = wavy(h);
            for &t in &[0.0, 0.37, 1.2] {
                let a = ch.zeta(t + ch.period);
                let b = ch.holonomy_apply(ch.zeta(t), 1);
                assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13, "{h:?}");
            }
        }
    }

    #[test]
    fn jet_matches_differences() {
        let ch = wavy(Holonomy::Translation(1.0, 0.2));
        let (t, e) = (0.77, 1e-5);
        let (_, d, dd) = ch.jet(t);
        let (p1, d1, _) = ch.jet(t + e);
        let (p0, d0, _) = ch.jet(t - e);
        for a in 0..2 {
            assert!(((p1[a] - p0[a]) / (2.0 * e) - d[a]).abs() < 1e-8);
            assert!(((d1[a] - d0[a]) / (2.0 * e) - dd[a]).abs() < 1e-7);
        }
        let (_, dn) = ch.normal(t);
        let (n1, _) = ch.normal(t + e);
        let (n0, _) = ch.normal(t - e);
        for a in 0..2 {
            assert!(((n1[a] - n0[a]) / (2.0 * e) - dn[a]).abs() < 1e-7);
        }
    }

    #[test]
    fn dev_round_trip() {
        let ch = wavy(Holonomy::HalfTurn);
        let (t, s) = (0.6, 0.04);
        let z = ch.dev(t, s);
        let (tt, ss) = ch.dev_inverse(z, (0.55, 0.0)).unwrap();
        assert!((tt - t).abs() < 1e-12 && (ss - s).abs() < 1e-12);
    }
}
