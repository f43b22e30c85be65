//! Moment-constrained coefficient solvers.
//!
//! Any coefficient matrix of the form `F = [mean, L U W1^{-1/2}]`, with
//! `L L^T` the target covariance and `U` row-orthonormal (`U U^T = I`),
//! reproduces the prescribed mean and second moment exactly: the expansion
//! covariance is `L U W1^{-1/2} W1 W1^{-1/2} U^T L^T = L L^T` for *any*
//! feasible `U`. The remaining freedom in `U` is spent minimizing the
//! mean-square residual: the unconstrained optimum (Galerkin target
//! `U_GP = L^{-1} R W1^{-1/2}`, or its sample-grid analogue) is projected
//! onto the feasible set by replacing its singular values with ones, which is
//! the closest row-orthonormal matrix in Frobenius distance.

use nalgebra::{DMatrix, DVector};

use crate::approximators::PCExpansion;
use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::expectation::MomentSet;
use crate::numeric;

/// Row-orthonormality must hold to this Frobenius tolerance.
const FEASIBILITY_TOL: f64 = 1e-10;

/// Below this Frobenius norm a projection target is treated as exactly zero:
/// every feasible matrix is then equally close, and the identity block is the
/// fixed tie-break. Targets are scaled like `U_GP`, whose singular values are
/// at most 1, so the threshold cleanly separates noise from signal.
const ZERO_TARGET_TOL: f64 = 1e-13;

/// A mean/second-moment pair to be reproduced exactly, with the lower
/// square-root factor of the implied covariance.
#[derive(Debug, Clone)]
pub struct MomentConstraint {
    mean: DVector<f64>,
    second: DMatrix<f64>,
    cholesky: DMatrix<f64>,
}

impl MomentConstraint {
    /// Validates the pair and factors `second - mean mean^T = L L^T`.
    /// The factor is rank-revealing: zero-variance directions stay exactly
    /// zero rather than amplifying noise.
    pub fn new(mean: DVector<f64>, second: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if second.nrows() != n || second.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "second moment matrix",
                expected: n,
                actual: second.nrows().max(second.ncols()),
            });
        }
        let covariance = &second - &mean * mean.transpose();
        let cholesky =
            numeric::psd_sqrt_lower(&covariance, "constraint covariance", second.trace().abs())?;
        Ok(Self {
            mean,
            second,
            cholesky,
        })
    }

    pub fn from_moments(moments: &MomentSet) -> Result<Self> {
        Self::new(moments.mean.clone(), moments.second.clone())
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn second(&self) -> &DMatrix<f64> {
        &self.second
    }

    /// Lower-triangular `L` with `L L^T = second - mean mean^T`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn output_dims(&self) -> usize {
        self.mean.len()
    }
}

/// A matrix with orthonormal rows, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleU {
    matrix: DMatrix<f64>,
}

impl FeasibleU {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n > matrix.ncols() {
            return Err(Error::BasisTooSmall {
                state_dims: n,
                basis_terms: matrix.ncols(),
            });
        }
        let gram = &matrix * matrix.transpose();
        let deviation = (gram - DMatrix::identity(n, n)).norm();
        if deviation > FEASIBILITY_TOL {
            return Err(Error::InfeasibleU { deviation });
        }
        Ok(Self { matrix })
    }

    /// The canonical feasible point `[I_n, 0]`.
    pub fn identity_block(rows: usize, cols: usize) -> Result<Self> {
        if rows > cols {
            return Err(Error::BasisTooSmall {
                state_dims: rows,
                basis_terms: cols,
            });
        }
        Ok(Self {
            matrix: DMatrix::identity(rows, cols),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Closest row-orthonormal matrix to `a` in Frobenius norm: write
/// `a = M1 D M2^T` and replace `D` by `[I, 0]`. A numerically zero target
/// returns the identity block (every feasible point is equally close).
pub fn project_to_orthonormal_rows(a: &DMatrix<f64>) -> Result<FeasibleU> {
    let n = a.nrows();
    let cols = a.ncols();
    if n > cols {
        return Err(Error::BasisTooSmall {
            state_dims: n,
            basis_terms: cols,
        });
    }
    if a.norm() <= ZERO_TARGET_TOL {
        return FeasibleU::identity_block(n, cols);
    }
    let svd = a.clone().svd(true, true);
    let m1 = svd.u.expect("left factor was requested");
    let m2_t = svd.v_t.expect("right factor was requested");
    FeasibleU::new(m1 * m2_t)
}

/// Assembles the exact-moment expansion `F = [mean, L U W1^{-1/2}]` for a
/// validated feasible `U`. The result's [`PCExpansion::moments`] equal the
/// constraint's mean and second moment for any such `U`.
pub fn assemble_theorem1(
    constraint: &MomentConstraint,
    basis: &BasisSet,
    u: &FeasibleU,
) -> Result<PCExpansion> {
    let n = constraint.output_dims();
    let nn = basis.len() - 1;
    if nn < n {
        return Err(Error::BasisTooSmall {
            state_dims: n,
            basis_terms: nn,
        });
    }
    if u.matrix().nrows() != n || u.matrix().ncols() != nn {
        return Err(Error::DimensionMismatch {
            context: "feasible U shape",
            expected: n * nn,
            actual: u.matrix().nrows() * u.matrix().ncols(),
        });
    }
    let mut f1 = constraint.cholesky() * u.matrix();
    scale_columns_by_inverse_sqrt_norms(&mut f1, basis);
    let mut coefficients = DMatrix::zeros(n, nn + 1);
    coefficients.set_column(0, constraint.mean());
    for j in 0..nn {
        coefficients.set_column(j + 1, &f1.column(j));
    }
    PCExpansion::new(basis.clone(), coefficients)
}

fn scale_columns_by_inverse_sqrt_norms(f1: &mut DMatrix<f64>, basis: &BasisSet) {
    for (j, mut col) in f1.column_iter_mut().enumerate() {
        col /= basis.norms()[j + 1].sqrt();
    }
}

/// The unconstrained density-weighted optimum `U_GP = L^{-1} R W1^{-1/2}`,
/// solved in the least-squares sense when `L` is singular (zero-variance
/// directions carry no constraint).
fn galerkin_target(
    constraint: &MomentConstraint,
    cross: &DMatrix<f64>,
    basis: &BasisSet,
) -> DMatrix<f64> {
    let mut rhs = cross.clone();
    scale_columns_by_inverse_sqrt_norms(&mut rhs, basis);
    numeric::lower_lstsq_solve(constraint.cholesky(), &rhs)
}

fn validate_cross(mom: &MomentSet, basis: &BasisSet) -> Result<()> {
    let nn = basis.len() - 1;
    if mom.cross.ncols() != nn {
        return Err(Error::DimensionMismatch {
            context: "cross moment columns",
            expected: nn,
            actual: mom.cross.ncols(),
        });
    }
    if nn < mom.output_dims() {
        return Err(Error::BasisTooSmall {
            state_dims: mom.output_dims(),
            basis_terms: nn,
        });
    }
    Ok(())
}

/// Density-weighted constrained solver: projects the Galerkin target onto
/// the feasible set and assembles the exact-moment expansion. The result
/// reproduces `mom.mean` and `mom.second` exactly and, among feasible `U`,
/// uses the one closest to the unconstrained optimum.
pub fn solve_constrained_galerkin(mom: &MomentSet, basis: &BasisSet) -> Result<PCExpansion> {
    validate_cross(mom, basis)?;
    let constraint = MomentConstraint::from_moments(mom)?;
    let target = galerkin_target(&constraint, &mom.cross, basis);
    let u_star = project_to_orthonormal_rows(&target)?;
    assemble_theorem1(&constraint, basis, &u_star)
}

/// Sample-grid constrained solver: like [`solve_constrained_galerkin`] but
/// the target comes from the discrete least-squares fit of `f - mean` on the
/// grid, `U_hat = L^{-1} E1^T E2^{-1} W1^{1/2}` with
/// `E1 = sum phi_1 (f - mean)^T` and `E2 = sum phi_1 phi_1^T`.
pub fn solve_constrained_least_squares<F>(
    grid: &[Vec<f64>],
    mom: &MomentSet,
    basis: &BasisSet,
    f: F,
) -> Result<PCExpansion>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    solve_constrained_ls_impl(grid, None, mom, basis, f)
}

/// Weighted variant of [`solve_constrained_least_squares`]: the grid sums
/// carry per-node weights, so a quadrature rule makes the discrete measure
/// match the density and the two constrained solvers agree.
pub fn solve_constrained_least_squares_weighted<F>(
    grid: &[Vec<f64>],
    weights: &[f64],
    mom: &MomentSet,
    basis: &BasisSet,
    f: F,
) -> Result<PCExpansion>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    if weights.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            context: "grid weights",
            expected: grid.len(),
            actual: weights.len(),
        });
    }
    solve_constrained_ls_impl(grid, Some(weights), mom, basis, f)
}

fn solve_constrained_ls_impl<F>(
    grid: &[Vec<f64>],
    weights: Option<&[f64]>,
    mom: &MomentSet,
    basis: &BasisSet,
    mut f: F,
) -> Result<PCExpansion>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    validate_cross(mom, basis)?;
    let n = mom.output_dims();
    let nn = basis.len() - 1;
    if grid.len() < nn {
        return Err(Error::InvalidConfig(format!(
            "constrained least squares needs at least {nn} grid points, got {}",
            grid.len()
        )));
    }
    let constraint = MomentConstraint::from_moments(mom)?;
    let mut e1 = DMatrix::zeros(nn, n);
    let mut e2 = DMatrix::zeros(nn, nn);
    for (i, node) in grid.iter().enumerate() {
        let w = weights.map_or(1.0, |ws| ws[i]);
        let value = f(node);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { node: node.clone() });
        }
        if value.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sampled output",
                expected: n,
                actual: value.len(),
            });
        }
        let phi = basis.eval(node)?;
        let phi1 = phi.rows(1, nn).into_owned();
        let centered = value - mom.mean.clone();
        e1.ger(w, &phi1, &centered, 1.0);
        e2.ger(w, &phi1, &phi1, 1.0);
    }
    // E1^T E2^{-1} is the grid fit of f - mean onto the non-constant basis.
    let fit = numeric::solve_spd(&e2, &e1, "grid normal matrix")?.transpose();
    let mut target_rhs = fit;
    for (j, mut col) in target_rhs.column_iter_mut().enumerate() {
        col *= basis.norms()[j + 1].sqrt();
    }
    let target = numeric::lower_lstsq_solve(constraint.cholesky(), &target_rhs);
    let u_star = project_to_orthonormal_rows(&target)?;
    assemble_theorem1(&constraint, basis, &u_star)
}

/// Mean-square residual cost of the exact-moment expansion assembled from
/// `u`: `J(U) = tr(Q) - 2 tr(F1 R^T) + tr(F1 W1 F1^T)` with
/// `F1 = L U W1^{-1/2}`. Equals the density expectation `E[||f - f_hat||^2]`
/// when the moments come from that density.
pub fn constrained_cost(mom: &MomentSet, basis: &BasisSet, u: &FeasibleU) -> Result<f64> {
    validate_cross(mom, basis)?;
    let constraint = MomentConstraint::from_moments(mom)?;
    let mut f1 = constraint.cholesky() * u.matrix();
    scale_columns_by_inverse_sqrt_norms(&mut f1, basis);
    let mut fit = 0.0;
    let mut quad = 0.0;
    for j in 0..f1.ncols() {
        let w = basis.norms()[j + 1];
        for i in 0..f1.nrows() {
            fit += f1[(i, j)] * mom.cross[(i, j)];
            quad += w * f1[(i, j)] * f1[(i, j)];
        }
    }
    Ok(mom.covariance.trace() - 2.0 * fit + quad)
}

/// Cost of the unconstrained Galerkin solution,
/// `J_GP = tr(Q - R W1^{-1} R^T)`.
pub fn galerkin_cost(mom: &MomentSet, basis: &BasisSet) -> Result<f64> {
    validate_cross(mom, basis)?;
    let mut explained = 0.0;
    for j in 0..mom.cross.ncols() {
        let w = basis.norms()[j + 1];
        for i in 0..mom.cross.nrows() {
            explained += mom.cross[(i, j)] * mom.cross[(i, j)] / w;
        }
    }
    Ok(mom.covariance.trace() - explained)
}

/// Exact cost increase of using `u` instead of the unconstrained optimum:
/// `J(U) - J_GP = ||L U - R W1^{-1/2}||_F^2`, non-negative for any feasible
/// `U` and zero iff the Galerkin solution is itself feasible.
pub fn gp_cost_gap(mom: &MomentSet, basis: &BasisSet, u: &FeasibleU) -> Result<f64> {
    validate_cross(mom, basis)?;
    let constraint = MomentConstraint::from_moments(mom)?;
    let mut rhs = mom.cross.clone();
    scale_columns_by_inverse_sqrt_norms(&mut rhs, basis);
    let gap = (constraint.cholesky() * u.matrix() - rhs).norm_squared();
    Ok(gap)
}
