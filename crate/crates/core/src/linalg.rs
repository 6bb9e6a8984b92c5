//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FilterError, Result};

/// Relative tolerance for treating a Cholesky pivot as zero.
const PIVOT_TOL: f64 = 1e-10;

/// Lower-triangular factor `L` with `L Lᵀ = m` for a symmetric positive
/// semidefinite `m`. Zero pivots (rank deficiency) are allowed; a pivot below
/// `-1e-10·‖m‖` is an error.
pub fn psd_cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(FilterError::Dimension {
            context,
            expected: n,
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NotPositiveSemidefinite { context });
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = PIVOT_TOL * scale;
    if !is_symmetric(m, 1e-9) {
        return Err(FilterError::NotPositiveSemidefinite { context });
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d < -tol {
            return Err(FilterError::NotPositiveSemidefinite { context });
        }
        if d <= tol {
            // rank-deficient direction; column stays zero
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                if s.abs() > tol.sqrt() * scale.sqrt() {
                    return Err(FilterError::NotPositiveSemidefinite { context });
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(FilterError::Singular { context })?;
    let inv = chol.inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::Singular { context });
    }
    Ok(symmetrize(&inv))
}

/// General inverse via LU; errors on singular input.
pub fn inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or(FilterError::Singular { context })?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::Singular { context });
    }
    Ok(inv)
}

pub fn standard_normal_vector(n: usize, rng: &mut dyn RngCore) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Central finite-difference Jacobian of `f` at `x`, with per-coordinate step
/// `1e-6·max(1, |x_j|)`.
pub fn finite_difference_jacobian<F>(f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut columns = Vec::with_capacity(x.len());
    let mut rows = 0;
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp)? - f(&xm)?) / (2.0 * h);
        rows = col.len();
        columns.push(col);
    }
    let mut jac = DMatrix::zeros(rows, x.len());
    for (j, col) in columns.into_iter().enumerate() {
        jac.set_column(j, &col);
    }
    Ok(jac)
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_pd_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = psd_cholesky(&m, "test").unwrap();
        assert!((&l * l.transpose() - &m).norm() < 1e-12);
    }

    #[test]
    fn cholesky_accepts_zero_and_rank_one() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(psd_cholesky(&z, "zero").unwrap(), z);
        let g = DVector::from_vec(vec![0.5, 1.0]);
        let r1 = &g * g.transpose() * 0.01;
        let l = psd_cholesky(&r1, "rank one").unwrap();
        assert!((&l * l.transpose() - &r1).norm() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            psd_cholesky(&m, "indef"),
            Err(FilterError::NotPositiveSemidefinite { .. })
        ));
        let neg = DMatrix::from_element(1, 1, -1.0);
        assert!(psd_cholesky(&neg, "neg").is_err());
    }

    #[test]
    fn finite_difference_matches_polynomial() {
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let jac = finite_difference_jacobian(
            |v| Ok(DVector::from_vec(vec![v[0] * v[0] * v[1], v[1].powi(3)])),
            &x,
        )
        .unwrap();
        let exact = DMatrix::from_row_slice(2, 2, &[2.0 * 1.5 * -2.0, 1.5 * 1.5, 0.0, 3.0 * 4.0]);
        assert!((jac - exact).abs().max() < 1e-6);
    }
}
