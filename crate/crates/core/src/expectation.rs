//! Expectation operators over uniform parameter domains.
//!
//! Every engine materializes a discrete measure (nodes + weights summing to
//! one) and reduces integrands by a fixed-order sequential sum, so results are
//! bit-reproducible for a given configuration. Three engines are provided:
//!
//! * tensor-product Gauss-Legendre quadrature, exact for polynomial
//!   integrands of per-dimension degree <= 2m - 1;
//! * seeded Monte Carlo with uniform draws (ChaCha stream, stable across
//!   platforms);
//! * caller-supplied weighted grids, loadable from CSV.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::basis::{BasisSet, UniformParameter};
use crate::error::{Error, Result};

/// Weights on a discrete measure must reproduce a probability measure.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// How an expectation is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpectationEngine {
    /// Tensor-product Gauss-Legendre rule with `points_per_dim` nodes per
    /// dimension.
    Quadrature { points_per_dim: usize },
    /// Independent uniform draws from a seeded ChaCha stream; every node gets
    /// weight 1/samples.
    MonteCarlo { samples: usize, seed: u64 },
    /// An explicit node/weight set, e.g. loaded from file.
    WeightedGrid(WeightedGrid),
}

impl ExpectationEngine {
    pub fn quadrature(points_per_dim: usize) -> Result<Self> {
        if points_per_dim == 0 {
            return Err(Error::InvalidConfig(
                "quadrature needs at least one point per dimension".into(),
            ));
        }
        Ok(Self::Quadrature { points_per_dim })
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidConfig(
                "monte carlo needs at least one sample".into(),
            ));
        }
        Ok(Self::MonteCarlo { samples, seed })
    }

    /// Materializes the discrete measure for the given domain.
    pub fn node_set(&self, param: &UniformParameter) -> Result<NodeSet> {
        match self {
            Self::Quadrature { points_per_dim } => {
                Ok(tensor_gauss_legendre(param, *points_per_dim))
            }
            Self::MonteCarlo { samples, seed } => Ok(uniform_samples(param, *samples, *seed)),
            Self::WeightedGrid(grid) => {
                if grid.dims() != param.dims() {
                    return Err(Error::DimensionMismatch {
                        context: "weighted grid dimension",
                        expected: param.dims(),
                        actual: grid.dims(),
                    });
                }
                Ok(NodeSet {
                    dims: grid.dims,
                    nodes: grid.nodes.clone(),
                    weights: grid.weights.clone(),
                })
            }
        }
    }

    /// E[g] under the engine's measure. The output length is fixed by the
    /// first evaluation; non-finite values fail with the offending node.
    pub fn expect<F>(&self, param: &UniformParameter, mut g: F) -> Result<DVector<f64>>
    where
        F: FnMut(&[f64]) -> DVector<f64>,
    {
        let set = self.node_set(param)?;
        let mut acc: Option<DVector<f64>> = None;
        for i in 0..set.len() {
            let node = set.node(i);
            let value = g(node);
            check_finite(&value, node)?;
            match acc.as_mut() {
                None => acc = Some(set.weight(i) * value),
                Some(sum) => {
                    if value.len() != sum.len() {
                        return Err(Error::DimensionMismatch {
                            context: "integrand output",
                            expected: sum.len(),
                            actual: value.len(),
                        });
                    }
                    sum.axpy(set.weight(i), &value, 1.0);
                }
            }
        }
        // Constructors guarantee at least one node.
        Ok(acc.expect("node set is never empty"))
    }
}

fn check_finite(value: &DVector<f64>, node: &[f64]) -> Result<()> {
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation {
            node: node.to_vec(),
        });
    }
    Ok(())
}

/// A materialized discrete measure: `len` nodes of dimension `dims`, stored
/// flat, with one weight per node.
#[derive(Debug, Clone)]
pub struct NodeSet {
    dims: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dims..(i + 1) * self.dims]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        (0..self.len()).map(move |i| (self.node(i), self.weight(i)))
    }
}

/// An explicit node/weight measure. Weights must be non-negative and sum to
/// one within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGrid {
    dims: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedGrid {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidConfig("weighted grid has no nodes".into()));
        }
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "weighted grid weights",
                expected: nodes.len(),
                actual: weights.len(),
            });
        }
        let dims = nodes[0].len();
        if dims == 0 {
            return Err(Error::InvalidConfig("weighted grid nodes are empty".into()));
        }
        let mut flat = Vec::with_capacity(nodes.len() * dims);
        for (i, node) in nodes.iter().enumerate() {
            if node.len() != dims {
                return Err(Error::DimensionMismatch {
                    context: "weighted grid node",
                    expected: dims,
                    actual: node.len(),
                });
            }
            if node.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "node {i} has non-finite coordinates"
                )));
            }
            flat.extend_from_slice(node);
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidConfig(
                "weighted grid weights must be finite and non-negative".into(),
            ));
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidConfig(format!(
                "weighted grid weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        Ok(Self {
            dims,
            nodes: flat,
            weights,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Loads a grid from CSV with header `delta_1,...,delta_d,w`.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path_str = path.as_ref().display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let malformed = |reason: String| Error::MalformedFile {
            path: path_str.clone(),
            reason,
        };
        let headers = reader.headers()?.clone();
        if headers.len() < 2 {
            return Err(malformed(format!(
                "need at least one coordinate column and a weight column, got {} columns",
                headers.len()
            )));
        }
        let dims = headers.len() - 1;
        if headers.get(dims) != Some("w") {
            return Err(malformed(format!(
                "last column must be named 'w', got {:?}",
                headers.get(dims).unwrap_or("")
            )));
        }
        for (i, name) in headers.iter().take(dims).enumerate() {
            let expected = format!("delta_{}", i + 1);
            if name != expected {
                return Err(malformed(format!(
                    "column {i} must be named '{expected}', got '{name}'"
                )));
            }
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != dims + 1 {
                return Err(malformed(format!(
                    "row {row} has {} fields, expected {}",
                    record.len(),
                    dims + 1
                )));
            }
            let mut node = Vec::with_capacity(dims);
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| {
                    malformed(format!("row {row}, column {col}: '{field}' is not a number"))
                })?;
                if col < dims {
                    node.push(value);
                } else {
                    weights.push(value);
                }
            }
            nodes.push(node);
        }
        Self::new(nodes, weights)
    }
}

/// Standard Gauss-Legendre nodes and weights on [-1, 1].
///
/// Roots of P_m by Newton iteration from the Chebyshev-like initial guess
/// cos(pi (i + 0.75) / (m + 0.5)); weights 2 / ((1 - x^2) P_m'(x)^2). Nodes
/// are mirrored so symmetric pairs are exact negations.
pub(crate) fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    // P_m(x), P_{m-1}(x) by the three-term recurrence, and P_m'(x).
    let eval = |x: f64| -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 1..m {
            let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    };
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = eval(x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = eval(x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x.abs();
        weights[i] = w;
        nodes[m - 1 - i] = x.abs();
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn tensor_gauss_legendre(param: &UniformParameter, m: usize) -> NodeSet {
    let d = param.dims();
    let (ref_nodes, ref_weights) = gauss_legendre(m);
    let total = m.pow(d as u32);
    let mut nodes = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut counter = vec![0usize; d];
    for _ in 0..total {
        let mut w = 1.0;
        for (dim, &k) in counter.iter().enumerate() {
            nodes.push(param.point_at_reference(dim, ref_nodes[k]));
            // Dividing by 2 turns the Lebesgue weight into a density weight;
            // the interval length cancels with the density.
            w *= ref_weights[k] * 0.5;
        }
        weights.push(w);
        for c in counter.iter_mut().rev() {
            *c += 1;
            if *c < m {
                break;
            }
            *c = 0;
        }
    }
    NodeSet {
        dims: d,
        nodes,
        weights,
    }
}

fn uniform_samples(param: &UniformParameter, samples: usize, seed: u64) -> NodeSet {
    let d = param.dims();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(samples * d);
    for _ in 0..samples {
        for dim in 0..d {
            let (lo, hi) = param.bounds()[dim];
            let u: f64 = rng.random();
            nodes.push(lo + u * (hi - lo));
        }
    }
    NodeSet {
        dims: d,
        nodes,
        weights: vec![1.0 / samples as f64; samples],
    }
}

/// First- and second-order statistics of a vector-valued function of the
/// parameters, plus its cross-moments with the non-constant basis functions.
#[derive(Debug, Clone)]
pub struct MomentSet {
    /// E[f], length n.
    pub mean: DVector<f64>,
    /// E[f f^T], n x n.
    pub second: DMatrix<f64>,
    /// E[f f^T] - E[f] E[f]^T, n x n.
    pub covariance: DMatrix<f64>,
    /// E[f phi_1^T] over the non-constant basis functions, n x N.
    pub cross: DMatrix<f64>,
}

/// Second moments may only deviate from symmetry by accumulation noise.
const SYMMETRY_TOL: f64 = 1e-12;

impl MomentSet {
    /// Validates symmetry and positive semidefiniteness of the implied
    /// covariance, then derives it.
    pub fn new(mean: DVector<f64>, second: DMatrix<f64>, cross: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if second.nrows() != n || second.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "second moment matrix",
                expected: n,
                actual: second.nrows().max(second.ncols()),
            });
        }
        if cross.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "cross moment rows",
                expected: n,
                actual: cross.nrows(),
            });
        }
        let asym = (&second - second.transpose()).norm();
        if asym > SYMMETRY_TOL * second.norm().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "second moment matrix is not symmetric (deviation {asym:.3e})"
            )));
        }
        let covariance = &second - &mean * mean.transpose();
        crate::numeric::check_psd(&covariance, "covariance", second.trace().abs())?;
        Ok(Self {
            mean,
            second,
            covariance,
            cross,
        })
    }

    /// Output dimension n.
    pub fn output_dims(&self) -> usize {
        self.mean.len()
    }
}

/// Computes mean, second moment, covariance, and basis cross-moments of `f`
/// in a single pass over the engine's nodes.
pub fn moments_of<F>(
    engine: &ExpectationEngine,
    param: &UniformParameter,
    basis: &BasisSet,
    mut f: F,
) -> Result<MomentSet>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    if basis.param() != param {
        return Err(Error::InvalidConfig(
            "basis was built on a different parameter domain".into(),
        ));
    }
    let set = engine.node_set(param)?;
    let nn = basis.len() - 1;
    let mut mean: Option<DVector<f64>> = None;
    let mut second = DMatrix::zeros(0, 0);
    let mut cross = DMatrix::zeros(0, 0);
    for i in 0..set.len() {
        let node = set.node(i);
        let w = set.weight(i);
        let value = f(node);
        check_finite(&value, node)?;
        let phi = basis.eval(node)?;
        match mean.as_mut() {
            None => {
                let n = value.len();
                mean = Some(w * &value);
                second = w * &value * value.transpose();
                cross = DMatrix::zeros(n, nn);
                accumulate_cross(&mut cross, w, &value, &phi);
            }
            Some(m) => {
                if value.len() != m.len() {
                    return Err(Error::DimensionMismatch {
                        context: "integrand output",
                        expected: m.len(),
                        actual: value.len(),
                    });
                }
                m.axpy(w, &value, 1.0);
                second.ger(w, &value, &value, 1.0);
                accumulate_cross(&mut cross, w, &value, &phi);
            }
        }
    }
    let mean = mean.expect("node set is never empty");
    MomentSet::new(mean, second, cross)
}

fn accumulate_cross(cross: &mut DMatrix<f64>, w: f64, value: &DVector<f64>, phi: &DVector<f64>) {
    for j in 0..cross.ncols() {
        let scale = w * phi[j + 1];
        for i in 0..cross.nrows() {
            cross[(i, j)] += scale * value[i];
        }
    }
}
