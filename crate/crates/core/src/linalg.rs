//! Small dense symmetric-matrix routines for covariance work.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.data.chunks(self.n).map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    /// Lower Cholesky factor of a symmetric positive-definite matrix.
    pub fn cholesky(&self) -> Result<Self> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Numeric("matrix is not positive definite".into()));
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        Ok(l)
    }

    /// Solve `L y = b` for lower-triangular `self`.
    pub fn forward_substitute(&self, b: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.get(i, k) * y[k];
            }
            y[i] = s / self.get(i, i);
        }
        y
    }

    /// Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Self) {
        let n = self.n;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let two = T::lit(2.0);
        for _sweep in 0..100 {
            let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a.get(i, j).powi(2)).sum();
            let diag: T = (0..n).map(|i| a.get(i, i).powi(2)).sum();
            if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (two * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a.get(k, p), a.get(k, q));
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a.get(p, k), a.get(q, k));
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        ((0..n).map(|i| a.get(i, i)).collect(), v)
    }

    /// `self^(-1/2)` for a symmetric positive-definite matrix.
    pub fn inverse_sqrt(&self) -> Result<Self> {
        let (vals, vecs) = self.symmetric_eigen();
        if vals.iter().any(|&l| !(l > T::zero())) {
            return Err(Error::Numeric("matrix is not positive definite".into()));
        }
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let s = (0..n).map(|k| vecs.get(i, k) * vecs.get(j, k) / vals[k].sqrt()).sum();
                out.set(i, j, s);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> Matrix<f64> {
        Matrix { n: 3, data: vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0] }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd();
        let l = a.cholesky().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l.get(i, k) * l.get(j, k)).sum();
                assert!((s - a.get(i, j)).abs() < 1e-12);
            }
        }
        assert!(Matrix { n: 2, data: vec![1.0, 2.0, 2.0, 1.0] }.cholesky().is_err());
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = spd();
        let r = a.inverse_sqrt().unwrap();
        // r * a * r = I
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).flat_map(|k| (0..3).map(move |m| (k, m))).map(|(k, m)| r.get(i, k) * a.get(k, m) * r.get(m, j)).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
