//! Shared numerical kernels on small symmetric matrices: PSD validation,
//! guarded solves, and the rank-revealing square-root factor used by the
//! moment constraints. Everything here assumes matrices small enough that a
//! full symmetric eigendecomposition is cheap.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, CONDITION_LIMIT};

/// Negative eigenvalues are tolerated only up to accumulation noise relative
/// to the trace; anything larger means the input is not a covariance.
const PSD_EIGEN_TOL: f64 = 1e-10;

/// Eigenvalues below this fraction of the trace are treated as exact zeros
/// when factoring a covariance, so that rank-deficient (e.g. deterministic)
/// directions stay exactly zero instead of amplifying noise.
const SQRT_TRUNCATION_TOL: f64 = 1e-12;

/// Relative singular-value cutoff for least-squares solves against a
/// truncated square-root factor. Kept well above rounding noise (~1e-16) and
/// well below the smallest retained direction (~1e-6 relative).
const PINV_RELATIVE_TOL: f64 = 1e-8;

pub(crate) struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let se = m.clone().symmetric_eigen();
    SymEigen {
        values: se.eigenvalues,
        vectors: se.eigenvectors,
    }
}

/// Validates that `m` is positive semidefinite up to accumulation noise and
/// returns its eigendecomposition for reuse.
///
/// `noise_scale` is the magnitude of the data `m` was assembled from. A
/// covariance built as `S - m m^T` can cancel exactly (deterministic output)
/// while carrying rounding noise of order `eps * trace(S)`; its own trace is
/// then useless as a tolerance reference, so the caller supplies trace(S).
pub(crate) fn check_psd(m: &DMatrix<f64>, what: &'static str, noise_scale: f64) -> Result<SymEigen> {
    let eig = sym_eigen(m);
    let tol = PSD_EIGEN_TOL * (m.trace().max(0.0) + noise_scale.max(0.0)) + f64::EPSILON;
    let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::NotPositiveSemidefinite {
            what,
            eigenvalue: min,
            tolerance: tol,
        });
    }
    Ok(eig)
}

/// Condition estimate max|lambda| / min|lambda| of a symmetric matrix.
pub(crate) fn sym_condition(eig: &SymEigen) -> f64 {
    let max = eig.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.values.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` for symmetric positive definite `a`, failing when the
/// condition estimate exceeds [`CONDITION_LIMIT`].
pub(crate) fn solve_spd(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    what: &'static str,
) -> Result<DMatrix<f64>> {
    let eig = check_psd(a, what, 0.0)?;
    let cond = sym_condition(&eig);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { what, cond });
    }
    // Eigen-solve: x = V diag(1/lambda) V^T b.
    let vt_b = eig.vectors.transpose() * b;
    let mut scaled = vt_b;
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= eig.values[i];
    }
    Ok(&eig.vectors * scaled)
}

/// Lower-triangular `L` with `L L^T = q`, where `q` is symmetric PSD up to
/// noise. Eigenvalues below `SQRT_TRUNCATION_TOL` times the trace (plus the
/// caller's `noise_scale`, see [`check_psd`]) are zeroed, then the factor is
/// re-triangularized through a QR decomposition, so the result is a genuine
/// Cholesky-shaped factor even for singular `q`.
pub(crate) fn psd_sqrt_lower(
    q: &DMatrix<f64>,
    what: &'static str,
    noise_scale: f64,
) -> Result<DMatrix<f64>> {
    let eig = check_psd(q, what, noise_scale)?;
    let n = q.nrows();
    let cutoff = SQRT_TRUNCATION_TOL * (q.trace().max(0.0) + noise_scale.max(0.0));
    let mut b = eig.vectors.clone();
    for (j, mut col) in b.column_iter_mut().enumerate() {
        let lambda = eig.values[j];
        col *= if lambda <= cutoff { 0.0 } else { lambda.sqrt() };
    }
    // B B^T = q; QR of B^T gives B^T = Q R, so L = R^T is lower triangular
    // with L L^T = R^T R = B B^T.
    let qr = b.transpose().qr();
    let mut l = qr.r().transpose();
    // Column signs are QR artifacts; fix diag >= 0 for determinism.
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            for i in 0..n {
                l[(i, j)] = -l[(i, j)];
            }
        }
    }
    Ok(l)
}

/// Minimum-norm least-squares solve of `l x = rhs` through an SVD with a
/// relative singular-value cutoff. Used where `l` is a (possibly singular)
/// covariance square root.
pub(crate) fn lower_lstsq_solve(l: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = l.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(l.ncols(), rhs.ncols());
    }
    svd.solve(rhs, PINV_RELATIVE_TOL * smax)
        .expect("SVD factors were requested")
}
