//! Symmetric banded matrices with an `LDLᵀ` factorisation (no pivoting).

use crate::scalar::{c, Real};

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `b`.
#[derive(Debug, Clone)]
pub struct SymBand<T> {
    n: usize,
    b: usize,
    // row i holds entries (i, i - d) for d = 0..=b at offset i*(b+1) + d
    data: Vec<T>,
}

impl<T: Real> SymBand<T> {
    pub fn zeros(n: usize, b: usize) -> Self {
        let b = b.min(n.saturating_sub(1));
        Self { n, b, data: vec![T::zero(); n * (b + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    /// Add `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        assert!(d <= self.b, "entry ({i}, {j}) outside band {}", self.b);
        self.data[i * (self.b + 1) + d] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d > self.b {
            T::zero()
        } else {
            self.data[i * (self.b + 1) + d]
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            for d in 0..=self.b.min(i) {
                let a = self.data[i * (self.b + 1) + d];
                let j = i - d;
                y[i] += a * x[j];
                if d > 0 {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Factor in place. Fails with the index of the first pivot whose magnitude is
    /// below `rel_tol` times the corresponding diagonal entry.
    pub fn factor(mut self, rel_tol: T) -> Result<SymBandFactor<T>, usize> {
        let w = self.b + 1;
        let mut diag = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.b);
            for j in lo..i {
                let mut s = self.data[i * w + (i - j)];
                let mlo = lo.max(j.saturating_sub(self.b));
                for m in mlo..j {
                    s -= self.data[i * w + (i - m)] * self.data[j * w + (j - m)] * diag[m];
                }
                self.data[i * w + (i - j)] = s / diag[j];
            }
            let a = self.data[i * w];
            let mut d = a;
            for m in lo..i {
                let l = self.data[i * w + (i - m)];
                d -= l * l * diag[m];
            }
            if !(d.abs() > rel_tol * a.abs().max(T::min_positive_value())) || !d.is_finite() {
                return Err(i);
            }
            diag[i] = d;
        }
        Ok(SymBandFactor { n: self.n, b: self.b, l: self.data, diag })
    }
}

/// `A = L D Lᵀ` with unit lower-triangular banded `L`.
#[derive(Debug, Clone)]
pub struct SymBandFactor<T> {
    n: usize,
    b: usize,
    l: Vec<T>,
    diag: Vec<T>,
}

impl<T: Real> SymBandFactor<T> {
    pub fn solve(&self, rhs: &mut [T]) {
        let w = self.b + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.b);
            let mut s = rhs[i];
            for j in lo..i {
                s -= self.l[i * w + (i - j)] * rhs[j];
            }
            rhs[i] = s;
        }
        for (r, d) in rhs.iter_mut().zip(&self.diag) {
            *r /= *d;
        }
        for i in (0..self.n).rev() {
            let x = rhs[i];
            let lo = i.saturating_sub(self.b);
            for j in lo..i {
                rhs[j] -= self.l[i * w + (i - j)] * x;
            }
        }
    }
}

/// Default pivot threshold.
pub fn default_pivot_tol<T: Real>() -> T {
    T::epsilon() * c::<T>(16.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 7;
        let mut a = SymBand::<f64>::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = a.mul_vec(&x);
        a.clone().factor(1e-14).unwrap().solve(&mut b);
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn solves_wide_band_against_dense() {
        let n = 12;
        let b = 4;
        let mut a = SymBand::<f64>::zeros(n, b);
        for i in 0..n {
            a.add(i, i, 10.0 + i as f64);
            for d in 1..=b.min(i) {
                a.add(i, i - d, 1.0 / (1.0 + d as f64 + i as f64));
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        // dense product as independent oracle
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                rhs[i] += a.get(i, j) * x[j];
            }
        }
        a.factor(1e-14).unwrap().solve(&mut rhs);
        for (p, q) in rhs.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_singular() {
        let mut a = SymBand::<f64>::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        assert_eq!(a.factor(1e-12).unwrap_err(), 1);
    }
}
