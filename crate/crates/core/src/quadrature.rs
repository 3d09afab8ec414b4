//! Adaptive Gauss–Kronrod and composite Simpson quadrature.

use crate::scalar::{c, Real};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
pub fn gk15<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = (b - a) * c::<T>(0.5);
    let mid = (a + b) * c::<T>(0.5);
    let fc = f(mid);
    let mut kron = fc * c::<T>(WGK[7]);
    let mut gauss = fc * c::<T>(WG[3]);
    for k in 0..7 {
        let dx = half * c::<T>(XGK[k]);
        let s = f(mid - dx) + f(mid + dx);
        kron += s * c::<T>(WGK[k]);
        if k % 2 == 1 {
            gauss += s * c::<T>(WG[k / 2]);
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureEstimate<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

/// Globally adaptive bisection with GK15 panels. `None` if the requested accuracy is
/// not reached within `max_intervals` panels or the integrand is not finite.
pub fn integrate_adaptive<T: Real>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_intervals: usize,
) -> Option<QuadratureEstimate<T>> {
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let total: T = panels.iter().map(|p| p.2).sum();
        let err: T = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return None;
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Some(QuadratureEstimate { value: total, error: err, intervals: panels.len() });
        }
        if panels.len() >= max_intervals {
            return None;
        }
        let (k, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (k, p)| if p.3 > best.1 { (k, p.3) } else { best });
        let (pa, pb, _, _) = panels.swap_remove(k);
        let m = (pa + pb) * c::<T>(0.5);
        let (v1, e1) = gk15(&f, pa, m);
        let (v2, e2) = gk15(&f, m, pb);
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
    }
}

/// Composite Simpson rule on uniformly spaced samples. An even number of intervals
/// is required; with an odd count the last interval uses the 3/8 rule on the final
/// four samples.
pub fn simpson<T: Real>(values: &[T], h: T) -> T {
    let n = values.len();
    match n {
        0 | 1 => T::zero(),
        2 => (values[0] + values[1]) * h * c::<T>(0.5),
        3 => (values[0] + c::<T>(4.0) * values[1] + values[2]) * h / c::<T>(3.0),
        _ => {
            let intervals = n - 1;
            let (main, tail) = if intervals % 2 == 0 { (n, 0) } else { (n - 3, 3) };
            let mut s = values[0] + values[main - 1];
            for (k, v) in values.iter().enumerate().take(main - 1).skip(1) {
                s += if k % 2 == 1 { c::<T>(4.0) * *v } else { c::<T>(2.0) * *v };
            }
            let mut total = s * h / c::<T>(3.0);
            if tail == 3 {
                let v = &values[n - 4..];
                total += c::<T>(3.0) * h / c::<T>(8.0) * (v[0] + c::<T>(3.0) * v[1] + c::<T>(3.0) * v[2] + v[3]);
            }
            total
        }
    }
}

/// Cumulative trapezoid integral on (possibly non-uniform) abscissae.
pub fn cumulative_trapezoid<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = T::zero();
    for k in 0..x.len() {
        if k > 0 {
            acc += (x[k] - x[k - 1]) * (y[k] + y[k - 1]) * c::<T>(0.5);
        }
        out.push(acc);
    }
    out
}

/// Five-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre5<T: Real>(f: impl Fn(T) -> T, a: T, b: T) -> T {
    const X: [f64; 3] = [0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
    const W: [f64; 3] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
    let half = (b - a) * c::<T>(0.5);
    let mid = (a + b) * c::<T>(0.5);
    let mut s = f(mid) * c::<T>(W[0]);
    for k in 1..3 {
        let dx = half * c::<T>(X[k]);
        s += (f(mid - dx) + f(mid + dx)) * c::<T>(W[k]);
    }
    s * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_polynomials_exactly() {
        let (v, _) = gk15(&|x: f64| x.powi(20), -1.0, 1.0);
        assert!((v - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let e = integrate_adaptive(f, -1.0, 1.0, 1e-12, 1e-13, 2000).unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((e.value - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn adaptive_reports_failure() {
        assert!(integrate_adaptive(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 1e-12, 50).is_none());
    }

    #[test]
    fn simpson_cubic_exact() {
        for n in [3usize, 4, 7, 10] {
            let h = 1.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|k| (k as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn trapezoid_linear_exact() {
        let x = [0.0, 0.1, 0.5, 0.7, 1.0];
        let y: Vec<f64> = x.iter().map(|x| 2.0 * x + 1.0).collect();
        let c = cumulative_trapezoid(&x, &y);
        assert!((c[4] - 2.0).abs() < 1e-15);
    }
}
