//! Dense square matrices and LU with partial pivoting.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// `PA = LU`, unit lower `L` and upper `U` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.n;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu.get(i, k).abs().total_cmp(&lu.get(j, k).abs()))
                .unwrap_or(k);
            if lu.get(p, k) == 0.0 {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu.get(k, k);
            for i in k + 1..n {
                let factor = lu.get(i, k) / pivot;
                lu.data[i * n + k] = factor;
                for j in k + 1..n {
                    lu.data[i * n + j] -= factor * lu.data[k * n + j];
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.n).map(|i| self.lu.get(i, i)).product::<f64>() * self.sign
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / self.lu.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.lu.n;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv.data[i * n + j] = v;
            }
        }
        inv
    }
}

/// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`.
pub fn condition_number_1(a: &Matrix, lu: &Lu) -> f64 {
    a.norm1() * lu.inverse().norm1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_determinant() {
        let a = Matrix::from_fn(3, |i, j| {
            [[2.0, 1.0, 1.0], [4.0, -6.0, 0.0], [-2.0, 7.0, 2.0]][i][j]
        });
        let lu = Lu::factor(&a).unwrap();
        assert!((lu.determinant() - (-16.0)).abs() < 1e-12);
        let x = lu.solve(&[5.0, -2.0, 9.0]);
        for (got, want) in x.iter().zip([1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let inv = lu.inverse();
        for i in 0..3 {
            let col: Vec<f64> = (0..3).map(|k| inv.get(k, i)).collect();
            let e = a.mul_vec(&col);
            for (k, v) in e.iter().enumerate() {
                assert!((v - if k == i { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = Matrix::from_fn(2, |i, j| [[0.0, 1.0], [1.0, 0.0]][i][j]);
        let lu = Lu::factor(&a).unwrap();
        assert_eq!(lu.determinant(), -1.0);
        assert_eq!(lu.solve(&[3.0, 4.0]), vec![4.0, 3.0]);
    }

    #[test]
    fn singular_detected() {
        let a = Matrix::from_fn(2, |i, _| i as f64 + 1.0);
        assert_eq!(Lu::factor(&a).unwrap_err(), Error::Singular);
    }

    #[test]
    fn identity_condition() {
        let a = Matrix::from_fn(4, |i, j| if i == j { 1.0 } else { 0.0 });
        let lu = Lu::factor(&a).unwrap();
        assert_eq!(condition_number_1(&a, &lu), 1.0);
    }
}
