//! Baseline coefficient solvers: Galerkin projection, stochastic collocation,
//! and discrete least squares.
//!
//! All three produce surrogates `f_hat(p) = F * basis(p)`. Galerkin and least
//! squares share the [`PCExpansion`] representation (coefficients over a
//! spectral basis); collocation keeps its node values and cardinal basis. The
//! spectral representation has closed-form statistics: the mean is the first
//! coefficient column and the second moment is `F W F^T` with `W` the
//! diagonal of basis norms.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, lagrange_basis, BasisSet, LagrangeBasis, UniformParameter};
use crate::error::{Error, Result};
use crate::expectation::ExpectationEngine;
use crate::numeric;

/// Anything that maps a parameter point to an output vector.
pub trait Surrogate {
    fn output_dims(&self) -> usize;
    fn eval(&self, point: &[f64]) -> Result<DVector<f64>>;
}

/// A spectral surrogate: coefficient matrix `F` (outputs x basis functions)
/// over a [`BasisSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct PCExpansion {
    basis: BasisSet,
    coefficients: DMatrix<f64>,
}

impl PCExpansion {
    pub fn new(basis: BasisSet, coefficients: DMatrix<f64>) -> Result<Self> {
        if coefficients.ncols() != basis.len() {
            return Err(Error::DimensionMismatch {
                context: "expansion coefficient columns",
                expected: basis.len(),
                actual: coefficients.ncols(),
            });
        }
        if coefficients.nrows() == 0 {
            return Err(Error::InvalidConfig("expansion has no output rows".into()));
        }
        Ok(Self {
            basis,
            coefficients,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Mean and second moment implied by the expansion: `F e_1` and
    /// `F W F^T`. Exact given the coefficients; no quadrature involved.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mean = self.coefficients.column(0).into_owned();
        let mut scaled = self.coefficients.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.basis.norms()[k];
        }
        let second = scaled * self.coefficients.transpose();
        (mean, second)
    }

    /// Coefficients flattened column-major (all outputs for basis 0, then all
    /// outputs for basis 1, ...), the state layout used by the propagator.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_column_slice(self.coefficients.as_slice())
    }

    /// Rebuilds an expansion from a flattened coefficient state.
    pub fn from_flat(basis: BasisSet, output_dims: usize, state: &DVector<f64>) -> Result<Self> {
        if output_dims == 0 || state.len() != output_dims * basis.len() {
            return Err(Error::DimensionMismatch {
                context: "flattened coefficient state",
                expected: output_dims * basis.len(),
                actual: state.len(),
            });
        }
        let coefficients = DMatrix::from_column_slice(output_dims, basis.len(), state.as_slice());
        Self::new(basis, coefficients)
    }

    /// Writes the expansion as CSV: one JSON-described header comment line,
    /// then one row of coefficients per output dimension.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let header = ExpansionHeader {
            order: self.basis.order(),
            bounds: self.basis.param().bounds().to_vec(),
            output_dims: self.coefficients.nrows(),
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "# pc-expansion v1 {}",
            serde_json::to_string(&header)?
        )?;
        for i in 0..self.coefficients.nrows() {
            let row: Vec<String> = (0..self.coefficients.ncols())
                .map(|j| format!("{:?}", self.coefficients[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads an expansion written by [`Self::write_csv`].
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path_str = path.as_ref().display().to_string();
        let malformed = |reason: String| Error::MalformedFile {
            path: path_str.clone(),
            reason,
        };
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| malformed("empty file".into()))??;
        let json = first
            .strip_prefix("# pc-expansion v1 ")
            .ok_or_else(|| malformed("missing 'pc-expansion v1' header line".into()))?;
        let header: ExpansionHeader = serde_json::from_str(json)?;
        let param = UniformParameter::new(header.bounds)?;
        let basis = build_basis(&param, header.order);
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| malformed(format!("'{s}' is not a number")))
                })
                .collect::<Result<_>>()?;
            if row.len() != basis.len() {
                return Err(malformed(format!(
                    "row has {} coefficients, basis has {}",
                    row.len(),
                    basis.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != header.output_dims {
            return Err(malformed(format!(
                "found {} rows, header says {}",
                rows.len(),
                header.output_dims
            )));
        }
        let coefficients =
            DMatrix::from_row_iterator(rows.len(), basis.len(), rows.into_iter().flatten());
        Self::new(basis, coefficients)
    }
}

#[derive(Serialize, Deserialize)]
struct ExpansionHeader {
    order: usize,
    bounds: Vec<(f64, f64)>,
    output_dims: usize,
}

impl Surrogate for PCExpansion {
    fn output_dims(&self) -> usize {
        self.coefficients.nrows()
    }

    fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.coefficients * self.basis.eval(point)?)
    }
}

/// Galerkin projection: `F = E[f phi^T] W^{-1}` under the engine's measure.
/// The mean row of the result is exact by construction whenever the engine
/// integrates `f` exactly.
pub fn solve_gp<F>(engine: &ExpectationEngine, basis: &BasisSet, mut f: F) -> Result<PCExpansion>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    let set = engine.node_set(basis.param())?;
    let mut acc: Option<DMatrix<f64>> = None;
    for i in 0..set.len() {
        let node = set.node(i);
        let w = set.weight(i);
        let value = f(node);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation {
                node: node.to_vec(),
            });
        }
        let phi = basis.eval(node)?;
        match acc.as_mut() {
            None => acc = Some(w * &value * phi.transpose()),
            Some(a) => {
                if value.len() != a.nrows() {
                    return Err(Error::DimensionMismatch {
                        context: "integrand output",
                        expected: a.nrows(),
                        actual: value.len(),
                    });
                }
                a.ger(w, &value, &phi, 1.0);
            }
        }
    }
    let mut coefficients = acc.expect("node set is never empty");
    for (k, mut col) in coefficients.column_iter_mut().enumerate() {
        col /= basis.norms()[k];
    }
    PCExpansion::new(basis.clone(), coefficients)
}

/// A collocation surrogate: sampled values combined through the cardinal
/// basis, `f_hat(p) = values * psi(p)`. Interpolates `f` exactly at the nodes.
#[derive(Debug, Clone)]
pub struct SCInterpolant {
    basis: LagrangeBasis,
    values: DMatrix<f64>,
}

impl SCInterpolant {
    pub fn cardinal_basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    /// Sampled values, one column per node.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

impl Surrogate for SCInterpolant {
    fn output_dims(&self) -> usize {
        self.values.nrows()
    }

    fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.values * self.basis.eval(point)?)
    }
}

/// Stochastic collocation: samples `f` at the nodes and interpolates through
/// the product-form cardinal basis.
pub fn solve_sc<F>(nodes: &[Vec<f64>], mut f: F) -> Result<SCInterpolant>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    let basis = lagrange_basis(nodes)?;
    let mut values: Option<DMatrix<f64>> = None;
    for (j, node) in nodes.iter().enumerate() {
        let value = f(node);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { node: node.clone() });
        }
        let v = values.get_or_insert_with(|| DMatrix::zeros(value.len(), nodes.len()));
        if value.len() != v.nrows() {
            return Err(Error::DimensionMismatch {
                context: "sampled output",
                expected: v.nrows(),
                actual: value.len(),
            });
        }
        v.set_column(j, &value);
    }
    Ok(SCInterpolant {
        basis,
        values: values.expect("lagrange_basis rejects empty node sets"),
    })
}

/// Discrete least squares over a sample grid: minimizes
/// `sum_i ||f(p_i) - F basis(p_i)||^2` via the normal equations
/// `F = H1^T H2^{-1}` with `H1 = sum phi f^T`, `H2 = sum phi phi^T`.
/// Needs at least as many samples as basis functions.
pub fn solve_ls<F>(grid: &[Vec<f64>], basis: &BasisSet, mut f: F) -> Result<PCExpansion>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    let nn1 = basis.len();
    if grid.len() < nn1 {
        return Err(Error::InvalidConfig(format!(
            "least squares needs at least {} samples for {} basis functions, got {}",
            nn1,
            nn1,
            grid.len()
        )));
    }
    let mut h1: Option<DMatrix<f64>> = None;
    let mut h2 = DMatrix::zeros(nn1, nn1);
    for node in grid {
        let value = f(node);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { node: node.clone() });
        }
        let phi = basis.eval(node)?;
        match h1.as_mut() {
            None => h1 = Some(&phi * value.transpose()),
            Some(h) => {
                if value.len() != h.ncols() {
                    return Err(Error::DimensionMismatch {
                        context: "sampled output",
                        expected: h.ncols(),
                        actual: value.len(),
                    });
                }
                h.ger(1.0, &phi, &value, 1.0);
            }
        }
        h2.ger(1.0, &phi, &phi, 1.0);
    }
    let h1 = h1.expect("grid length was checked above");
    let coefficients = numeric::solve_spd(&h2, &h1, "least-squares normal matrix")?.transpose();
    PCExpansion::new(basis.clone(), coefficients)
}

/// Default least-squares grid: `2 (N+1)` independent uniform draws from the
/// basis domain, reproducible from the seed.
pub fn default_ls_grid(basis: &BasisSet, seed: u64) -> Vec<Vec<f64>> {
    let param = basis.param();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..2 * basis.len())
        .map(|_| {
            param
                .bounds()
                .iter()
                .map(|&(lo, hi)| {
                    let u: f64 = rng.random();
                    lo + u * (hi - lo)
                })
                .collect()
        })
        .collect()
}

/// Default collocation nodes: `count` Gauss-Legendre points per dimension,
/// combined index-wise (node i takes the i-th Gauss point in every
/// dimension). The index-wise combination keeps nodes pairwise distinct in
/// every coordinate, which the product-form cardinal basis requires; for
/// d = 1 these are just the Gauss-Legendre points.
pub fn default_collocation_nodes(param: &UniformParameter, count: usize) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidConfig(
            "collocation needs at least one node".into(),
        ));
    }
    let (ref_nodes, _) = crate::expectation::gauss_legendre(count);
    Ok((0..count)
        .map(|i| {
            (0..param.dims())
                .map(|dim| param.point_at_reference(dim, ref_nodes[i]))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Solves based on exact quadrature should be correct to rounding.
    const EXACT_SOLVE: f64 = 1e-13;

    fn unit_param() -> UniformParameter {
        UniformParameter::symmetric_unit(1).unwrap()
    }

    fn scalar<F: Fn(f64) -> f64 + Copy>(g: F) -> impl Fn(&[f64]) -> DVector<f64> + Copy {
        move |x: &[f64]| DVector::from_element(1, g(x[0]))
    }

    #[test]
    fn galerkin_recovers_quadratic_exactly() {
        let basis = build_basis(&unit_param(), 2);
        let engine = ExpectationEngine::quadrature(8).unwrap();
        let exp = solve_gp(&engine, &basis, scalar(|x| x * x)).unwrap();
        let c = exp.coefficients();
        assert_abs_diff_eq!(c[(0, 0)], 1.0 / 3.0, epsilon = EXACT_SOLVE);
        assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = EXACT_SOLVE);
        assert_abs_diff_eq!(c[(0, 2)], 2.0 / 3.0, epsilon = EXACT_SOLVE);
        for &x in &[-0.8, -0.1, 0.3, 0.9] {
            assert_abs_diff_eq!(exp.eval(&[x]).unwrap()[0], x * x, epsilon = EXACT_SOLVE);
        }
    }

    #[test]
    fn galerkin_truncation_keeps_exact_mean() {
        // kappa = 1 cannot represent x^2, but the mean stays exact and the
        // second moment drops by the truncated tail: estimate 1/9 vs true 1/5.
        let basis = build_basis(&unit_param(), 1);
        let engine = ExpectationEngine::quadrature(8).unwrap();
        let exp = solve_gp(&engine, &basis, scalar(|x| x * x)).unwrap();
        let (mean, second) = exp.moments();
        assert_abs_diff_eq!(mean[0], 1.0 / 3.0, epsilon = EXACT_SOLVE);
        assert_abs_diff_eq!(second[(0, 0)], 1.0 / 9.0, epsilon = EXACT_SOLVE);
    }

    #[test]
    fn galerkin_of_constant_is_constant_column() {
        let basis = build_basis(&unit_param(), 3);
        let engine = ExpectationEngine::quadrature(4).unwrap();
        let exp = solve_gp(&engine, &basis, scalar(|_| 7.25)).unwrap();
        assert_abs_diff_eq!(exp.coefficients()[(0, 0)], 7.25, epsilon = EXACT_SOLVE);
        assert!(exp.coefficients().columns(1, 3).norm() <= EXACT_SOLVE);
    }

    #[test]
    fn galerkin_residual_is_orthogonal_to_basis() {
        let basis = build_basis(&unit_param(), 2);
        let engine = ExpectationEngine::quadrature(64).unwrap();
        let exp = solve_gp(&engine, &basis, scalar(|x| (3.0 * x).sin().powi(2))).unwrap();
        for k in 0..basis.len() {
            let inner = engine
                .expect(basis.param(), |p: &[f64]| {
                    let residual = (3.0 * p[0]).sin().powi(2) - exp.eval(p).unwrap()[0];
                    DVector::from_element(1, residual * basis.eval(p).unwrap()[k])
                })
                .unwrap()[0];
            assert!(inner.abs() <= 1e-10, "<residual, phi_{k}> = {inner}");
        }
    }

    #[test]
    fn expansion_moments_match_hand_values() {
        let basis = build_basis(&unit_param(), 2);
        let coeffs = DMatrix::from_row_slice(1, 3, &[1.0 / 3.0, 0.0, 2.0 / 3.0]);
        let exp = PCExpansion::new(basis, coeffs).unwrap();
        let (mean, second) = exp.moments();
        assert_abs_diff_eq!(mean[0], 1.0 / 3.0, epsilon = 1e-15);
        // 1/9 + (2/3)^2 / 5 = 1/5.
        assert_abs_diff_eq!(second[(0, 0)], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn collocation_interpolates_through_nodes() {
        let nodes = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let sc = solve_sc(&nodes, scalar(|x| x * x)).unwrap();
        for &x in &[-0.6, 0.2, 0.7] {
            assert_abs_diff_eq!(sc.eval(&[x]).unwrap()[0], x * x, epsilon = 1e-14);
        }
        assert_eq!(sc.values().ncols(), 3);
        assert_eq!(sc.values()[(0, 2)], 1.0);
    }

    #[test]
    fn sparse_collocation_misses_high_degree_moments() {
        // Two nodes interpolate x^8 by a straight line; its implied second
        // moment is far from E[x^16] = 1/17.
        let nodes = default_collocation_nodes(&unit_param(), 2).unwrap();
        let sc = solve_sc(&nodes, scalar(|x| x.powi(8))).unwrap();
        let engine = ExpectationEngine::quadrature(16).unwrap();
        let second = engine
            .expect(&unit_param(), |p: &[f64]| {
                let v = sc.eval(p).unwrap()[0];
                DVector::from_element(1, v * v)
            })
            .unwrap()[0];
        assert!((second - 1.0 / 17.0).abs() > 0.05);
    }

    #[test]
    fn least_squares_reproduces_polynomial_on_gauss_grid() {
        let basis = build_basis(&unit_param(), 2);
        let grid = default_collocation_nodes(&unit_param(), 4).unwrap();
        let exp = solve_ls(&grid, &basis, scalar(|x| x * x)).unwrap();
        let c = exp.coefficients();
        assert_abs_diff_eq!(c[(0, 0)], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(0, 2)], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_needs_enough_samples() {
        let basis = build_basis(&unit_param(), 2);
        let grid = vec![vec![0.0], vec![0.5]];
        assert!(matches!(
            solve_ls(&grid, &basis, scalar(|x| x)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn least_squares_rejects_degenerate_grid() {
        let basis = build_basis(&unit_param(), 2);
        let grid = vec![vec![0.3]; 5];
        assert!(matches!(
            solve_ls(&grid, &basis, scalar(|x| x)),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn default_ls_grid_is_seeded_and_sized() {
        let basis = build_basis(&unit_param(), 3);
        let a = default_ls_grid(&basis, 11);
        let b = default_ls_grid(&basis, 11);
        let c = default_ls_grid(&basis, 12);
        assert_eq!(a.len(), 2 * basis.len());
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|p| p[0].abs() <= 1.0));
    }

    #[test]
    fn flatten_round_trips_column_major() {
        let basis = build_basis(&unit_param(), 1);
        let coeffs = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let exp = PCExpansion::new(basis.clone(), coeffs).unwrap();
        let flat = exp.flatten();
        // Column-major: outputs of basis 0 first.
        assert_eq!(flat.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        let back = PCExpansion::from_flat(basis, 2, &flat).unwrap();
        assert_eq!(back, exp);
    }

    #[test]
    fn expansion_csv_round_trip() {
        let param = UniformParameter::new(vec![(0.0, 2.0)]).unwrap();
        let basis = build_basis(&param, 2);
        let coeffs = DMatrix::from_row_slice(2, 3, &[0.5, -1.25, 3.0, 0.1, 0.2, -0.3125]);
        let exp = PCExpansion::new(basis, coeffs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("expansion.csv");
        exp.write_csv(&path).unwrap();
        let back = PCExpansion::read_csv(&path).unwrap();
        assert_eq!(back, exp);
    }

    #[test]
    fn expansion_csv_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nonsense.csv");
        std::fs::write(&path, "1.0,2.0\n").unwrap();
        assert!(matches!(
            PCExpansion::read_csv(&path),
            Err(Error::MalformedFile { .. })
        ));
    }
}
