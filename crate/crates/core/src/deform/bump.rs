//! Smooth cutoffs: the radial bump `φ` and the compactly supported bumps used as a
//! basis for `ξ`.

use crate::scalar::{c, Real};

/// `E(t) = exp(-1/t)` for `t > 0`, else `0`.
fn e<T: Real>(t: T) -> T {
    if t > T::zero() {
        (-T::one() / t).exp()
    } else {
        T::zero()
    }
}

/// Smooth step: `0` for `t ≤ 0`, `1` for `t ≥ 1`, `E(t) / (E(t) + E(1-t))` between.
pub fn smooth_step<T: Real>(t: T) -> T {
    if t <= T::zero() {
        T::zero()
    } else if t >= T::one() {
        T::one()
    } else {
        let a = e(t);
        a / (a + e(T::one() - t))
    }
}

/// Non-increasing cutoff with `φ = 1` on `[0, r/2]` and `φ = 0` on `[r, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump<T> {
    pub r: T,
}

impl<T: Real> Bump<T> {
    pub fn new(r: T) -> Self {
        Self { r }
    }

    pub fn eval(&self, d: T) -> T {
        let half = self.r * c::<T>(0.5);
        smooth_step((self.r - d) / half)
    }
}

/// `ψ(x) = exp(-1/(1-ρ²))`, `ρ = (x - center)/(width/2)`, supported in
/// `(center - width/2, center + width/2)`, with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBump<T> {
    pub center: T,
    pub width: T,
}

impl<T: Real> CompactBump<T> {
    pub fn new(center: T, width: T) -> Self {
        Self { center, width }
    }

    pub fn support(&self) -> (T, T) {
        let hw = self.width * c::<T>(0.5);
        (self.center - hw, self.center + hw)
    }

    /// `(ψ, ψ', ψ'')` at `x`.
    pub fn eval(&self, x: T) -> (T, T, T) {
        let hw = self.width * c::<T>(0.5);
        let rho = (x - self.center) / hw;
        let q = T::one() - rho * rho;
        if q <= T::zero() {
            return (T::zero(), T::zero(), T::zero());
        }
        let b = (-T::one() / q).exp();
        if b == T::zero() {
            return (T::zero(), T::zero(), T::zero());
        }
        let d1 = b * (c::<T>(-2.0) * rho / (q * q));
        let r4 = rho * rho * rho * rho;
        let d2 = b * (c::<T>(6.0) * r4 - c::<T>(2.0)) / (q * q * q * q);
        (b, d1 / hw, d2 / (hw * hw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_are_exact() {
        let phi = Bump::new(0.4f64);
        for d in [0.0, 0.1, 0.2] {
            assert_eq!(phi.eval(d), 1.0);
        }
        for d in [0.4, 0.5, 3.0] {
            assert_eq!(phi.eval(d), 0.0);
        }
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = phi.eval(0.2 + 0.002 * k as f64);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn step_is_symmetric() {
        for t in [0.1f64, 0.3, 0.45] {
            assert!((smooth_step(t) + smooth_step(1.0 - t) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let b = CompactBump::new(0.5f64, 0.3);
        let h = 1e-5;
        for x in [0.4, 0.47, 0.55, 0.62] {
            let (v, d1, d2) = b.eval(x);
            let (vp, _, _) = b.eval(x + h);
            let (vm, _, _) = b.eval(x - h);
            assert!((d1 - (vp - vm) / (2.0 * h)).abs() < 1e-6 * (1.0 + d1.abs()));
            assert!((d2 - (vp - 2.0 * v + vm) / (h * h)).abs() < 1e-3 * (1.0 + d2.abs()));
        }
        assert_eq!(b.eval(0.35).0, 0.0);
        assert_eq!(b.eval(0.7).0, 0.0);
    }
}
