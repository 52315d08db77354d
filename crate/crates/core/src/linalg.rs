//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Numerical rank from the singular values with a relative cutoff.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn check_finite_matrix(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_full_row_rank(a: &DMatrix<f64>) -> Result<()> {
    let r = rank(a, RANK_TOL);
    if r < a.nrows() {
        return Err(Error::RankDeficient {
            rank: r,
            rows: a.nrows(),
        });
    }
    Ok(())
}

/// Orthonormal basis (as columns) of `{w : A w = 0}`.
///
/// Uses a Householder QR of `A^T`; the trailing `n - m` columns of the full
/// orthogonal factor span the null space when `A` has full row rank.
pub fn null_space_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite_matrix(a, "matrix")?;
    let (m, n) = a.shape();
    if m > n {
        return Err(Error::Dimension(format!("{m} rows exceed {n} columns")));
    }
    ensure_full_row_rank(a)?;
    if m == n {
        return Ok(DMatrix::zeros(n, 0));
    }
    if m == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let qr = a.transpose().qr();
    let mut qt = DMatrix::<f64>::identity(n, n);
    qr.q_tr_mul(&mut qt);
    // rows m.. of Q^T are the null-space directions
    Ok(qt.rows(m, n - m).transpose())
}

/// Orthonormal basis for the span of the given column vectors.
pub fn span_basis(cols: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let d = cols.nrows();
    if cols.ncols() == 0 || d == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = cols.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(d, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(d, keep.len(), |r, c| u[(r, keep[c])])
}

/// Least-squares solution of `M x = b` through a QR factorization.
/// Returns `None` when `M` has (numerically) dependent columns.
pub fn least_squares(mat: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (r, c) = mat.shape();
    if c == 0 {
        return Some(DVector::zeros(0));
    }
    if r < c {
        return None;
    }
    let qr = mat.clone().qr();
    let rr = qr.r();
    let dmax = (0..c).map(|i| rr[(i, i)].abs()).fold(0.0, f64::max);
    if (0..c).any(|i| rr[(i, i)].abs() <= 1e-12 * dmax) {
        return None;
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, c).into_owned();
    rr.solve_upper_triangular(&rhs)
}

/// Residual `b - M x` with each entry accumulated in double-double
/// arithmetic (error-free products via fused multiply-add).
pub fn accurate_residual(mat: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mat.nrows(), |r, _| {
        let (mut hi, mut lo) = (b[r], 0.0);
        for c in 0..mat.ncols() {
            let p = -mat[(r, c)] * x[c];
            let perr = (-mat[(r, c)]).mul_add(x[c], -p);
            let s = hi + p;
            let bp = s - hi;
            let serr = (hi - (s - bp)) + (p - bp);
            hi = s;
            lo += serr + perr;
        }
        hi + lo
    })
}

/// [`least_squares`] followed by a few rounds of iterative refinement
/// against [`accurate_residual`]. For consistent systems this drives the
/// forward error down to a few ulps of the solution.
pub fn refined_least_squares(mat: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let mut x = least_squares(mat, b)?;
    for _ in 0..3 {
        let r = accurate_residual(mat, &x, b);
        let dx = least_squares(mat, &r)?;
        if dx.iter().all(|v| *v == 0.0) {
            break;
        }
        x += dx;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_first_coordinate_row() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = null_space_basis(&a).unwrap();
        assert_eq!(b.shape(), (2, 1));
        assert!(b[(0, 0)].abs() < 1e-14);
        assert!((b[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn square_invertible_has_empty_null_space() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 3.0]);
        assert_eq!(null_space_basis(&a).unwrap().ncols(), 0);
    }

    #[test]
    fn rank_deficient_rejected() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            null_space_basis(&a),
            Err(Error::RankDeficient { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn span_basis_drops_dependent_columns() {
        let g = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(span_basis(&g, RANK_TOL).ncols(), 2);
    }

    #[test]
    fn least_squares_consistent_system() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = least_squares(&m, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_reaches_last_bits() {
        // ill-conditioned, with b = M (1, 1) exactly representable
        let e = 2f64.powi(-26);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + e]);
        let x_true = DVector::from_element(2, 1.0);
        let b = DVector::from_vec(vec![2.0, 2.0 + e]);
        let plain = least_squares(&m, &b).unwrap();
        let refined = refined_least_squares(&m, &b).unwrap();
        let err = |x: &DVector<f64>| (x - &x_true).amax();
        assert!(err(&refined) <= err(&plain));
        assert!(
            err(&refined) < 1e-14,
            "{} vs {}",
            err(&refined),
            err(&plain)
        );
    }
}
