//! Exact integer matrix arithmetic for the semidirect actions.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::GroupError;

/// Square integer matrix with i64 entries, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntMatrix {
    n: usize,
    a: Vec<i64>,
}

impl TryFrom<Vec<Vec<i64>>> for IntMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self, String> {
        let n = rows.len();
        if n == 0 {
            return Err("matrix must be non-empty".into());
        }
        let mut a = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(format!("matrix must be square, row has {} entries, expected {n}", row.len()));
            }
            a.extend_from_slice(row);
        }
        Ok(IntMatrix { n, a })
    }
}

impl From<IntMatrix> for Vec<Vec<i64>> {
    fn from(m: IntMatrix) -> Vec<Vec<i64>> {
        (0..m.n).map(|i| m.a[i * m.n..(i + 1) * m.n].to_vec()).collect()
    }
}

impl IntMatrix {
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self, GroupError> {
        IntMatrix::try_from(rows).map_err(GroupError::InvalidDescriptor)
    }

    pub fn identity(n: usize) -> Self {
        let mut a = vec![0i64; n * n];
        for i in 0..n {
            a[i * n + i] = 1;
        }
        IntMatrix { n, a }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.a[i * self.n + j]
    }

    pub fn to_big(&self) -> BigMatrix {
        BigMatrix {
            n: self.n,
            a: self.a.iter().map(|&v| BigInt::from(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j) as f64)
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut a = vec![0i64; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                a[j * self.n + i] = self.entry(i, j);
            }
        }
        IntMatrix { n: self.n, a }
    }

    pub fn commutes_with(&self, other: &IntMatrix) -> bool {
        if self.n != other.n {
            return false;
        }
        let ab = self.to_big().mul(&other.to_big());
        let ba = other.to_big().mul(&self.to_big());
        ab == ba
    }

    /// Exact determinant (Bareiss fraction-free elimination).
    pub fn det(&self) -> BigInt {
        self.to_big().det()
    }

    /// Exact inverse for matrices with determinant +-1.
    pub fn inverse_unimodular(&self) -> Result<IntMatrix, GroupError> {
        let inv = self.to_big().inverse_rational().ok_or_else(|| {
            GroupError::InvalidDescriptor("matrix is singular".into())
        })?;
        let mut a = Vec::with_capacity(self.n * self.n);
        for q in inv {
            if !q.is_integer() {
                return Err(GroupError::InvalidDescriptor(
                    "matrix inverse is not integral (determinant is not +-1)".into(),
                ));
            }
            let z = q.to_integer();
            let v = i64::try_from(&z).map_err(|_| GroupError::Overflow)?;
            a.push(v);
        }
        Ok(IntMatrix { n: self.n, a })
    }
}

/// Square matrix over arbitrary-precision integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigMatrix {
    n: usize,
    a: Vec<BigInt>,
}

impl BigMatrix {
    pub fn identity(n: usize) -> Self {
        let mut a = vec![BigInt::zero(); n * n];
        for i in 0..n {
            a[i * n + i] = BigInt::one();
        }
        BigMatrix { n, a }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.a[i * self.n + j]
    }

    pub fn mul(&self, other: &BigMatrix) -> BigMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut a = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = &self.a[i * n + k];
                if aik.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = &other.a[k * n + j];
                    if !b.is_zero() {
                        a[i * n + j] += aik * b;
                    }
                }
            }
        }
        BigMatrix { n, a }
    }

    pub fn matvec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.n, v.len());
        (0..self.n)
            .map(|i| {
                let mut acc = BigInt::zero();
                for j in 0..self.n {
                    let a = &self.a[i * self.n + j];
                    if !a.is_zero() && !v[j].is_zero() {
                        acc += a * &v[j];
                    }
                }
                acc
            })
            .collect()
    }

    /// Exact power with integer exponent. Negative exponents require an
    /// integral inverse (determinant +-1), which the descriptor validation
    /// guarantees for action matrices.
    pub fn pow(&self, e: i64) -> Result<BigMatrix, GroupError> {
        let base = if e >= 0 {
            self.clone()
        } else {
            self.inverse_unimodular()?
        };
        let mut exp = e.unsigned_abs();
        let mut result = BigMatrix::identity(self.n);
        let mut sq = base;
        while exp > 0 {
            if exp & 1 == 1 {
                result = result.mul(&sq);
            }
            exp >>= 1;
            if exp > 0 {
                sq = sq.mul(&sq);
            }
        }
        Ok(result)
    }

    pub fn inverse_unimodular(&self) -> Result<BigMatrix, GroupError> {
        let inv = self
            .inverse_rational()
            .ok_or_else(|| GroupError::InvalidDescriptor("matrix is singular".into()))?;
        let mut a = Vec::with_capacity(self.n * self.n);
        for q in inv {
            if !q.is_integer() {
                return Err(GroupError::InvalidDescriptor(
                    "matrix inverse is not integral (determinant is not +-1)".into(),
                ));
            }
            a.push(q.to_integer());
        }
        Ok(BigMatrix { n: self.n, a })
    }

    /// Bareiss fraction-free determinant.
    pub fn det(&self) -> BigInt {
        let n = self.n;
        let mut m: Vec<BigInt> = self.a.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n {
            if m[k * n + k].is_zero() {
                // pivot search
                let mut found = None;
                for i in (k + 1)..n {
                    if !m[i * n + k].is_zero() {
                        found = Some(i);
                        break;
                    }
                }
                match found {
                    Some(i) => {
                        for j in 0..n {
                            m.swap(k * n + j, i * n + j);
                        }
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in (k + 1)..n {
                for j in (k + 1)..n {
                    let num = &m[i * n + j] * &m[k * n + k] - &m[i * n + k] * &m[k * n + j];
                    m[i * n + j] = num / &prev;
                }
                m[i * n + k] = BigInt::zero();
            }
            prev = m[k * n + k].clone();
        }
        sign * m[(n - 1) * n + (n - 1)].clone()
    }

    /// Exact inverse over the rationals via Gauss-Jordan; None if singular.
    pub fn inverse_rational(&self) -> Option<Vec<BigRational>> {
        let n = self.n;
        let mut m: Vec<BigRational> = self
            .a
            .iter()
            .map(|z| BigRational::from_integer(z.clone()))
            .collect();
        let mut inv: Vec<BigRational> = (0..n * n)
            .map(|idx| {
                if idx / n == idx % n {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        for col in 0..n {
            let pivot_row = (col..n).find(|&r| !m[r * n + col].is_zero())?;
            if pivot_row != col {
                for j in 0..n {
                    m.swap(col * n + j, pivot_row * n + j);
                    inv.swap(col * n + j, pivot_row * n + j);
                }
            }
            let p = m[col * n + col].clone();
            for j in 0..n {
                m[col * n + j] /= &p;
                inv[col * n + j] /= &p;
            }
            for r in 0..n {
                if r == col || m[r * n + col].is_zero() {
                    continue;
                }
                let f = m[r * n + col].clone();
                for j in 0..n {
                    let mv = &m[col * n + j] * &f;
                    m[r * n + j] -= mv;
                    let iv = &inv[col * n + j] * &f;
                    inv[r * n + j] -= iv;
                }
            }
        }
        Some(inv)
    }

    pub fn is_identity(&self) -> bool {
        *self == BigMatrix::identity(self.n)
    }

    /// Largest absolute entry, used for growth diagnostics.
    pub fn max_abs_entry(&self) -> BigInt {
        self.a
            .iter()
            .map(|z| z.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sol() -> IntMatrix {
        IntMatrix::from_rows(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn det_sol_is_one() {
        assert_eq!(sol().det(), BigInt::one());
    }

    #[test]
    fn inverse_sol() {
        let inv = sol().inverse_unimodular().unwrap();
        assert_eq!(inv, IntMatrix::from_rows(vec![vec![1, -1], vec![-1, 2]]).unwrap());
    }

    #[test]
    fn pow_matches_repeated_multiplication() {
        let a = sol().to_big();
        let a2 = a.mul(&a);
        assert_eq!(a.pow(2).unwrap(), a2);
        let a_neg = a.pow(-3).unwrap();
        assert!(a.pow(3).unwrap().mul(&a_neg).is_identity());
    }

    #[test]
    fn det_singular() {
        let m = IntMatrix::from_rows(vec![vec![1, 2], vec![2, 4]]).unwrap();
        assert_eq!(m.det(), BigInt::zero());
        assert!(m.to_big().inverse_rational().is_none());
    }

    #[test]
    fn det_pivot_swap() {
        let m = IntMatrix::from_rows(vec![vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(m.det(), BigInt::from(-1));
    }

    #[test]
    fn commutation() {
        let a = sol();
        let a2 = IntMatrix::from_rows(vec![vec![5, 3], vec![3, 2]]).unwrap();
        let b = IntMatrix::from_rows(vec![vec![1, 1], vec![0, 1]]).unwrap();
        assert!(a.commutes_with(&a2));
        assert!(!a.commutes_with(&b));
    }
}
