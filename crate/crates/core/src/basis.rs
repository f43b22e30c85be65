//! Orthogonal polynomial bases for uniformly distributed parameters, plus the
//! product-form cardinal (Lagrange) basis used by stochastic collocation.
//!
//! The spectral basis is the tensor-product Legendre family. Each univariate
//! factor is the Legendre polynomial of the multi-index exponent, evaluated on
//! the parameter's interval through the affine map onto [-1, 1]. With the
//! uniform *density* (not the bare Lebesgue measure) as weight, the squared
//! norm of the degree-k factor is 1/(2k+1) independent of the interval length,
//! so norms are available in closed form and every expectation of a basis
//! product reduces to a polynomial integral a Gauss rule computes exactly.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A vector of independent uniformly distributed parameters, one closed
/// interval per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformParameter {
    bounds: Vec<(f64, f64)>,
}

impl UniformParameter {
    /// Builds a parameter domain from per-dimension `(lower, upper)` bounds.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidDomain("no dimensions given".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "dimension {i} has non-finite bounds ({lo}, {hi})"
                )));
            }
            if lo >= hi {
                return Err(Error::InvalidDomain(format!(
                    "dimension {i} has empty interval ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// The symmetric unit box [-1, 1]^d.
    pub fn symmetric_unit(dims: usize) -> Result<Self> {
        Self::new(vec![(-1.0, 1.0); dims])
    }

    /// The unit box [0, 1]^d.
    pub fn unit(dims: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); dims])
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Affine map of coordinate `x` in dimension `dim` onto [-1, 1].
    pub(crate) fn to_reference(&self, dim: usize, x: f64) -> f64 {
        let (lo, hi) = self.bounds[dim];
        2.0 * (x - lo) / (hi - lo) - 1.0
    }

    /// Inverse of [`Self::to_reference`]: maps `u` in [-1, 1] into the interval.
    pub(crate) fn point_at_reference(&self, dim: usize, u: f64) -> f64 {
        let (lo, hi) = self.bounds[dim];
        lo + 0.5 * (u + 1.0) * (hi - lo)
    }
}

/// Per-dimension polynomial exponents of one tensor-product basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<usize>,
}

impl MultiIndex {
    pub fn exponents(&self) -> &[usize] {
        &self.exponents
    }

    pub fn total_degree(&self) -> usize {
        self.exponents.iter().sum()
    }
}

/// A truncated tensor-product Legendre basis: all multi-indices of total
/// degree at most `order`, with precomputed squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    param: UniformParameter,
    order: usize,
    indices: Vec<MultiIndex>,
    norms: DVector<f64>,
}

/// Builds the total-degree basis of the given order.
///
/// Indices are ordered graded-lexicographically: ascending total degree, ties
/// broken so that earlier dimensions carry the higher exponent first. For
/// d = 1 this makes bases nested across orders (index k is the degree-k
/// polynomial), which downstream code relies on when restricting results to a
/// lower order. The first function is always the constant 1.
pub fn build_basis(param: &UniformParameter, order: usize) -> BasisSet {
    let d = param.dims();
    let mut indices = Vec::new();
    let mut scratch = vec![0usize; d];
    for degree in 0..=order {
        push_indices_of_degree(d, degree, 0, &mut scratch, &mut indices);
    }
    // Density-normalized norm of the degree-k Legendre factor is 1/(2k+1);
    // the interval length cancels against the density.
    let norms = DVector::from_iterator(
        indices.len(),
        indices.iter().map(|idx| {
            idx.exponents()
                .iter()
                .map(|&k| 1.0 / (2 * k + 1) as f64)
                .product::<f64>()
        }),
    );
    BasisSet {
        param: param.clone(),
        order,
        indices,
        norms,
    }
}

fn push_indices_of_degree(
    dims: usize,
    remaining: usize,
    dim: usize,
    scratch: &mut [usize],
    out: &mut Vec<MultiIndex>,
) {
    if dim + 1 == dims {
        scratch[dim] = remaining;
        out.push(MultiIndex {
            exponents: scratch.to_vec(),
        });
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[dim] = e;
        push_indices_of_degree(dims, remaining - e, dim + 1, scratch, out);
    }
}

impl BasisSet {
    pub fn param(&self) -> &UniformParameter {
        &self.param
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions, N + 1.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Squared norms E[phi_i^2] under the uniform density, in index order.
    pub fn norms(&self) -> &DVector<f64> {
        &self.norms
    }

    /// Evaluates all basis functions at one parameter point.
    pub fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        let mut table = vec![0.0; self.scratch_len()];
        let mut values = DVector::zeros(self.indices.len());
        self.eval_into(point, &mut table, values.as_mut_slice())?;
        Ok(values)
    }

    /// Scratch length required by [`Self::eval_into`].
    pub fn scratch_len(&self) -> usize {
        self.param.dims() * (self.order + 1)
    }

    /// Allocation-free variant of [`Self::eval`] for hot loops. `scratch`
    /// must have length [`Self::scratch_len`] and `out` length [`Self::len`];
    /// both are overwritten.
    pub fn eval_into(&self, point: &[f64], scratch: &mut [f64], out: &mut [f64]) -> Result<()> {
        let d = self.param.dims();
        if point.len() != d {
            return Err(Error::DimensionMismatch {
                context: "basis evaluation point",
                expected: d,
                actual: point.len(),
            });
        }
        // Univariate Legendre values up to the max order, one row per dim.
        let width = self.order + 1;
        for dim in 0..d {
            let u = self.param.to_reference(dim, point[dim]);
            legendre_values(self.order, u, &mut scratch[dim * width..(dim + 1) * width]);
        }
        for (value, idx) in out.iter_mut().zip(&self.indices) {
            *value = idx
                .exponents()
                .iter()
                .enumerate()
                .map(|(dim, &k)| scratch[dim * width + k])
                .product::<f64>();
        }
        Ok(())
    }
}

/// Fills `out[0..=order]` with Legendre values P_0(u) .. P_order(u) via the
/// three-term recurrence (m+1) P_{m+1} = (2m+1) u P_m - m P_{m-1}.
pub(crate) fn legendre_values(order: usize, u: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if order == 0 {
        return;
    }
    out[1] = u;
    for m in 1..order {
        out[m + 1] =
            ((2 * m + 1) as f64 * u * out[m] - m as f64 * out[m - 1]) / (m + 1) as f64;
    }
}

/// Cardinal basis on a scattered node set, in the product form
/// psi_i(p) = prod_{j != i} prod_dim (p_dim - node_j_dim) / (node_i_dim - node_j_dim).
///
/// For d = 1 this is the classical Lagrange basis. For d > 1 the construction
/// requires every pair of nodes to differ in *every* coordinate, which rules
/// out tensor grids; staggered or scattered nodes satisfy it.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    dims: usize,
    nodes: Vec<Vec<f64>>,
    denominators: Vec<f64>,
}

/// Builds the cardinal basis for the given nodes.
pub fn lagrange_basis(nodes: &[Vec<f64>]) -> Result<LagrangeBasis> {
    if nodes.is_empty() {
        return Err(Error::InvalidDomain("no interpolation nodes given".into()));
    }
    let dims = nodes[0].len();
    if dims == 0 {
        return Err(Error::InvalidDomain("zero-dimensional nodes".into()));
    }
    for (i, node) in nodes.iter().enumerate() {
        if node.len() != dims {
            return Err(Error::DimensionMismatch {
                context: "interpolation node",
                expected: dims,
                actual: node.len(),
            });
        }
        if node.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "node {i} has non-finite coordinates {node:?}"
            )));
        }
    }
    let mut denominators = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let mut denom = 1.0;
        for j in 0..nodes.len() {
            if j == i {
                continue;
            }
            for (a, b) in nodes[i].iter().zip(&nodes[j]) {
                let factor = a - b;
                if factor == 0.0 {
                    return Err(Error::CoincidentNodes {
                        i: i.min(j),
                        j: i.max(j),
                    });
                }
                denom *= factor;
            }
        }
        denominators.push(denom);
    }
    Ok(LagrangeBasis {
        dims,
        nodes: nodes.to_vec(),
        denominators,
    })
}

impl LagrangeBasis {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Evaluates all cardinal functions at one point. The numerator is
    /// accumulated in the same factor order as the stored denominator, so at
    /// node i the i-th value is exactly 1 and every other value exactly 0.
    pub fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        if point.len() != self.dims {
            return Err(Error::DimensionMismatch {
                context: "cardinal basis evaluation point",
                expected: self.dims,
                actual: point.len(),
            });
        }
        let mut values = DVector::zeros(self.nodes.len());
        for i in 0..self.nodes.len() {
            let mut numer = 1.0;
            for j in 0..self.nodes.len() {
                if j == i {
                    continue;
                }
                for (p, n) in point.iter().zip(&self.nodes[j]) {
                    numer *= p - n;
                }
            }
            values[i] = numer / self.denominators[i];
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Closed-form quantities reproduced by exact rational arithmetic.
    const EXACT: f64 = 1e-15;

    #[test]
    fn rejects_bad_domains() {
        assert!(UniformParameter::new(vec![]).is_err());
        assert!(UniformParameter::new(vec![(0.0, 0.0)]).is_err());
        assert!(UniformParameter::new(vec![(1.0, -1.0)]).is_err());
        assert!(UniformParameter::new(vec![(0.0, f64::NAN)]).is_err());
        assert!(UniformParameter::new(vec![(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn univariate_norms_match_closed_form() {
        let param = UniformParameter::symmetric_unit(1).unwrap();
        let basis = build_basis(&param, 2);
        assert_eq!(basis.len(), 3);
        assert_abs_diff_eq!(basis.norms()[0], 1.0, epsilon = EXACT);
        assert_abs_diff_eq!(basis.norms()[1], 1.0 / 3.0, epsilon = EXACT);
        assert_abs_diff_eq!(basis.norms()[2], 1.0 / 5.0, epsilon = EXACT);
    }

    #[test]
    fn norms_do_not_depend_on_interval() {
        let narrow = build_basis(&UniformParameter::new(vec![(0.0, 0.25)]).unwrap(), 3);
        let wide = build_basis(&UniformParameter::new(vec![(-7.0, 13.0)]).unwrap(), 3);
        assert_eq!(narrow.norms(), wide.norms());
    }

    #[test]
    fn evaluates_legendre_values_at_zero() {
        let param = UniformParameter::symmetric_unit(1).unwrap();
        let basis = build_basis(&param, 2);
        let v = basis.eval(&[0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = EXACT);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = EXACT);
        assert_abs_diff_eq!(v[2], -0.5, epsilon = EXACT);
    }

    #[test]
    fn evaluates_to_one_at_right_endpoint() {
        // Every Legendre polynomial equals 1 at u = 1.
        let param = UniformParameter::symmetric_unit(1).unwrap();
        let basis = build_basis(&param, 1);
        let v = basis.eval(&[1.0]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn shifted_interval_uses_affine_map() {
        // On [0, 1] the degree-1 factor is 2x - 1.
        let param = UniformParameter::unit(1).unwrap();
        let basis = build_basis(&param, 1);
        let v = basis.eval(&[0.75]).unwrap();
        assert_abs_diff_eq!(v[1], 0.5, epsilon = EXACT);
        let v0 = basis.eval(&[0.0]).unwrap();
        assert_abs_diff_eq!(v0[1], -1.0, epsilon = EXACT);
    }

    #[test]
    fn order_zero_is_the_constant() {
        let param = UniformParameter::symmetric_unit(2).unwrap();
        let basis = build_basis(&param, 0);
        assert_eq!(basis.len(), 1);
        let v = basis.eval(&[0.3, -0.8]).unwrap();
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn total_degree_count_matches_binomial() {
        // (d + kappa)! / (d! kappa!) basis functions.
        let param2 = UniformParameter::symmetric_unit(2).unwrap();
        assert_eq!(build_basis(&param2, 2).len(), 6);
        let param3 = UniformParameter::symmetric_unit(3).unwrap();
        assert_eq!(build_basis(&param3, 4).len(), 35);
    }

    #[test]
    fn indices_are_graded_and_nested() {
        let param = UniformParameter::symmetric_unit(2).unwrap();
        let basis = build_basis(&param, 2);
        let exps: Vec<&[usize]> = basis.indices().iter().map(|i| i.exponents()).collect();
        assert_eq!(
            exps,
            vec![
                &[0, 0][..],
                &[1, 0][..],
                &[0, 1][..],
                &[2, 0][..],
                &[1, 1][..],
                &[0, 2][..],
            ]
        );
        // Lower order is a prefix of higher order.
        let smaller = build_basis(&param, 1);
        assert_eq!(smaller.indices(), &basis.indices()[..3]);
    }

    #[test]
    fn multivariate_norms_are_products() {
        let param = UniformParameter::symmetric_unit(2).unwrap();
        let basis = build_basis(&param, 2);
        // Index [1, 1] has norm (1/3)^2.
        let pos = basis
            .indices()
            .iter()
            .position(|i| i.exponents() == [1, 1])
            .unwrap();
        assert_abs_diff_eq!(basis.norms()[pos], 1.0 / 9.0, epsilon = EXACT);
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let param = UniformParameter::symmetric_unit(2).unwrap();
        let basis = build_basis(&param, 1);
        assert!(matches!(
            basis.eval(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cardinal_basis_on_three_nodes() {
        // Nodes {-1, 0, 1}: the middle cardinal function is 1 - x^2.
        let nodes = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let basis = lagrange_basis(&nodes).unwrap();
        for &x in &[-0.9, -0.3, 0.0, 0.4, 1.0] {
            let v = basis.eval(&[x]).unwrap();
            assert_abs_diff_eq!(v[1], 1.0 - x * x, epsilon = EXACT);
        }
    }

    #[test]
    fn cardinal_property_is_exact_at_nodes() {
        let nodes = vec![vec![-0.7, 0.2], vec![0.1, -0.4], vec![0.6, 0.9]];
        let basis = lagrange_basis(&nodes).unwrap();
        for (i, node) in nodes.iter().enumerate() {
            let v = basis.eval(node).unwrap();
            for j in 0..nodes.len() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(v[j], expected, "psi_{j} at node {i}");
            }
        }
    }

    #[test]
    fn coincident_nodes_are_rejected() {
        let err = lagrange_basis(&[vec![0.5], vec![0.5]]).unwrap_err();
        assert!(matches!(err, Error::CoincidentNodes { i: 0, j: 1 }));
        // d = 2: sharing a single coordinate already breaks the product form.
        let err = lagrange_basis(&[vec![0.0, 0.3], vec![0.0, 0.7]]).unwrap_err();
        assert!(matches!(err, Error::CoincidentNodes { .. }));
    }

    #[test]
    fn single_node_basis_is_constant_one() {
        let basis = lagrange_basis(&[vec![0.2]]).unwrap();
        let v = basis.eval(&[0.9]).unwrap();
        assert_eq!(v[0], 1.0);
    }
}
