//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_symmetric(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(a.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number from singular values; works for non-symmetric input.
pub fn condition_general(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let sv = a.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Solves `a x = b` for a symmetric positive definite `a`, falling back to LU.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular {
            context: context.to_string(),
            condition: condition_general(a),
        })
}

pub fn inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular {
            context: context.to_string(),
            condition: condition_general(a),
        })
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Empirical covariance (denominator `k - 1`) of row draws.
pub fn empirical_covariance(draws: &[DVector<f64>]) -> DMatrix<f64> {
    let k = draws.len();
    let d = draws.first().map_or(0, |v| v.len());
    let mut mean = DVector::zeros(d);
    for v in draws {
        mean += v;
    }
    mean /= k as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in draws {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    if k > 1 {
        cov /= (k - 1) as f64;
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_spd(&a, &b, "test").unwrap();
        assert!(((&a * &x) - &b).norm() < 1e-14);
    }

    #[test]
    fn singular_reports_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = inverse(&a, "unit").unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn covariance_of_two_points() {
        let draws = vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])];
        assert_eq!(empirical_covariance(&draws)[(0, 0)], 2.0);
    }
}
