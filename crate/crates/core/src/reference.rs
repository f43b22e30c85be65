//! Reference moment providers for the propagation loop.
//!
//! [`run_algorithm1`](crate::propagator::run_algorithm1) consumes reference
//! statistics through the [`ReferenceStatsProvider`] trait. Three sources are
//! implemented:
//!
//! * [`LinearDecayReference`]: closed-form moments of `dx/dt = -p x`,
//!   `x(0) = x0`, with the decay rate uniform on the basis interval. The
//!   cross moments against the non-constant basis functions are smooth
//!   one-dimensional integrals evaluated by a fixed Gauss rule well past
//!   machine precision.
//! * [`EnsembleReference`]: seeded Monte Carlo over parameter draws, marched
//!   with the same Runge-Kutta scheme as the propagators. Per-step standard
//!   errors of the mean and second moment are retained so downstream
//!   comparisons can be judged against sampling noise. Summation order is
//!   fixed (chunked, folded in chunk order), so results are bit-reproducible
//!   for a given seed regardless of thread count.
//! * [`SurrogateTrajectoryReference`]: exact moments of an existing
//!   coefficient trajectory, used to test that reconstruction plus fitting
//!   recovers a trajectory that is itself linear in the coefficients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::approximators::PCExpansion;
use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::expectation::{ExpectationEngine, NodeSet};
use crate::propagator::{CoefficientSeries, ReferenceStats, ReferenceStatsProvider};

/// Quadrature points for the smooth univariate cross-moment integrals of
/// [`LinearDecayReference`]. The integrands `exp(-p t) P_k(p)` have rapidly
/// decaying Chebyshev coefficients over a bounded interval, so 64 points
/// leave only rounding error for every horizon used here.
const DECAY_CROSS_POINTS: usize = 64;

/// Paths per work unit when accumulating ensemble statistics. Chunks are
/// folded in index order, which pins the floating-point summation order.
const ENSEMBLE_CHUNK: usize = 4096;

/// Closed-form reference for the scalar linear decay `dx/dt = -p x` with
/// deterministic initial value `x0` and `p` uniform on the (one-dimensional)
/// basis interval.
#[derive(Debug, Clone)]
pub struct LinearDecayReference {
    basis: BasisSet,
    step: f64,
    x0: f64,
    cross_nodes: NodeSet,
}

impl LinearDecayReference {
    pub fn new(basis: BasisSet, step: f64, x0: f64) -> Result<Self> {
        if basis.param().dims() != 1 {
            return Err(Error::InvalidConfig(format!(
                "linear decay reference is one-dimensional, got {} parameter dimensions",
                basis.param().dims()
            )));
        }
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive and finite, got {step}"
            )));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initial value must be finite, got {x0}"
            )));
        }
        let cross_nodes =
            ExpectationEngine::quadrature(DECAY_CROSS_POINTS)?.node_set(basis.param())?;
        Ok(Self {
            basis,
            step,
            x0,
            cross_nodes,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// E[x(t)] = x0 E[exp(-p t)], in closed form. Written through `exp_m1`
    /// so small `t (hi - lo)` loses no precision to cancellation.
    pub fn mean_at(&self, t: f64) -> f64 {
        self.x0 * Self::uniform_exp_mean(self.basis.param().bounds()[0], t)
    }

    /// E[x(t)^2] = x0^2 E[exp(-2 p t)], in closed form.
    pub fn second_at(&self, t: f64) -> f64 {
        self.x0 * self.x0 * Self::uniform_exp_mean(self.basis.param().bounds()[0], 2.0 * t)
    }

    /// E[exp(-p t)] for p ~ U(lo, hi):
    /// (exp(-lo t) - exp(-hi t)) / (t (hi - lo)).
    fn uniform_exp_mean((lo, hi): (f64, f64), t: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        let width = hi - lo;
        -(-lo * t).exp() * (-width * t).exp_m1() / (t * width)
    }

    fn cross_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let nn1 = self.basis.len();
        let mut cross = DMatrix::zeros(1, nn1 - 1);
        for (node, w) in self.cross_nodes.iter() {
            let phi = self.basis.eval(node)?;
            let x = self.x0 * (-node[0] * t).exp();
            for j in 1..nn1 {
                cross[(0, j - 1)] += w * x * phi[j];
            }
        }
        Ok(cross)
    }
}

impl ReferenceStatsProvider for LinearDecayReference {
    fn stats_at(&self, k: usize) -> Result<ReferenceStats> {
        let t = k as f64 * self.step;
        Ok(ReferenceStats {
            mean: DVector::from_element(1, self.mean_at(t)),
            second: DMatrix::from_element(1, 1, self.second_at(t)),
            cross: self.cross_at(t)?,
        })
    }
}

/// Per-step ensemble statistics: the reference moments plus the standard
/// errors of the per-dimension mean and second-moment estimators.
#[derive(Debug, Clone)]
struct EnsembleStep {
    stats: ReferenceStats,
    se_mean: DVector<f64>,
    se_second: DVector<f64>,
}

/// Seeded Monte Carlo reference statistics on a fixed time grid.
#[derive(Debug, Clone)]
pub struct EnsembleReference {
    basis: BasisSet,
    step: f64,
    paths: usize,
    steps: Vec<EnsembleStep>,
}

/// Running sums over one chunk of paths; folded in chunk order.
struct EnsemblePartial {
    sum_x: DVector<f64>,
    sum_xx: DMatrix<f64>,
    sum_xphi: DMatrix<f64>,
    sum_x4: DVector<f64>,
}

impl EnsemblePartial {
    fn zeros(n: usize, cross_cols: usize) -> Self {
        Self {
            sum_x: DVector::zeros(n),
            sum_xx: DMatrix::zeros(n, n),
            sum_xphi: DMatrix::zeros(n, cross_cols),
            sum_x4: DVector::zeros(n),
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        self.sum_x += &other.sum_x;
        self.sum_xx += &other.sum_xx;
        self.sum_xphi += &other.sum_xphi;
        self.sum_x4 += &other.sum_x4;
        self
    }
}

impl EnsembleReference {
    /// Draws `paths` parameter samples, marches every path with classical
    /// Runge-Kutta steps of size `step` from the shared initial state `x0`,
    /// and records moments at every step `0..=steps`. `dynamics` writes
    /// `f(state, parameter)` into its output slice and must be thread-safe;
    /// paths are independent, so the march parallelizes over path chunks.
    pub fn generate<D>(
        basis: &BasisSet,
        dynamics: D,
        x0: &DVector<f64>,
        step: f64,
        steps: usize,
        paths: usize,
        seed: u64,
    ) -> Result<Self>
    where
        D: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    {
        let n = x0.len();
        if n == 0 {
            return Err(Error::InvalidConfig("empty initial state".into()));
        }
        if paths < 2 {
            return Err(Error::InvalidConfig(format!(
                "standard errors need at least 2 paths, got {paths}"
            )));
        }
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive and finite, got {step}"
            )));
        }
        let d = basis.param().dims();
        let nn1 = basis.len();

        // Parameter draws in a fixed order (path-major, dimension-minor), so
        // the sample set is a pure function of the seed.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = vec![0.0; paths * d];
        for path in 0..paths {
            for (dim, &(lo, hi)) in basis.param().bounds().iter().enumerate() {
                let u: f64 = rng.random();
                params[path * d + dim] = lo + u * (hi - lo);
            }
        }
        let mut states = vec![0.0; paths * n];
        for path in 0..paths {
            states[path * n..(path + 1) * n].copy_from_slice(x0.as_slice());
        }

        let mut recorded = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let partials: Vec<EnsemblePartial> = params
                .par_chunks(ENSEMBLE_CHUNK * d)
                .zip(states.par_chunks(ENSEMBLE_CHUNK * n))
                .map(|(pchunk, schunk)| accumulate_chunk(basis, pchunk, schunk, n))
                .collect::<Result<Vec<_>>>()?;
            let total = partials
                .into_iter()
                .fold(EnsemblePartial::zeros(n, nn1 - 1), |acc, p| acc.merge(&p));
            recorded.push(finish_step(total, paths));

            if k < steps {
                params
                    .par_chunks(ENSEMBLE_CHUNK * d)
                    .zip(states.par_chunks_mut(ENSEMBLE_CHUNK * n))
                    .try_for_each(|(pchunk, schunk)| {
                        advance_chunk(&dynamics, pchunk, schunk, n, step)
                    })?;
            }
        }
        Ok(Self {
            basis: basis.clone(),
            step,
            paths,
            steps: recorded,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    /// Number of recorded time steps (steps + 1 including the initial state).
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Standard error of the per-dimension mean estimator at step `k`.
    pub fn se_mean(&self, k: usize) -> &DVector<f64> {
        &self.steps[k].se_mean
    }

    /// Standard error of the per-dimension second-moment estimator at step `k`.
    pub fn se_second(&self, k: usize) -> &DVector<f64> {
        &self.steps[k].se_second
    }

    /// Re-expresses the same ensemble against a lower-order basis on the same
    /// parameter domain. Graded index ordering makes the smaller basis a
    /// prefix of the larger one, so the cross-moment columns restrict by
    /// slicing; means, second moments, and standard errors are unchanged.
    pub fn restrict_to(&self, smaller: &BasisSet) -> Result<EnsembleReference> {
        if smaller.param() != self.basis.param() {
            return Err(Error::InvalidConfig(
                "restriction target has a different parameter domain".into(),
            ));
        }
        if smaller.len() > self.basis.len()
            || smaller.indices() != &self.basis.indices()[..smaller.len()]
        {
            return Err(Error::InvalidConfig(
                "restriction target is not a prefix of the recorded basis".into(),
            ));
        }
        let cols = smaller.len() - 1;
        let steps = self
            .steps
            .iter()
            .map(|s| EnsembleStep {
                stats: ReferenceStats {
                    mean: s.stats.mean.clone(),
                    second: s.stats.second.clone(),
                    cross: s.stats.cross.columns(0, cols).into_owned(),
                },
                se_mean: s.se_mean.clone(),
                se_second: s.se_second.clone(),
            })
            .collect();
        Ok(EnsembleReference {
            basis: smaller.clone(),
            step: self.step,
            paths: self.paths,
            steps,
        })
    }
}

fn accumulate_chunk(
    basis: &BasisSet,
    pchunk: &[f64],
    schunk: &[f64],
    n: usize,
) -> Result<EnsemblePartial> {
    let d = basis.param().dims();
    let nn1 = basis.len();
    let count = schunk.len() / n;
    let mut acc = EnsemblePartial::zeros(n, nn1 - 1);
    let mut scratch = vec![0.0; basis.scratch_len()];
    let mut phi = vec![0.0; nn1];
    for path in 0..count {
        let p = &pchunk[path * d..(path + 1) * d];
        let x = &schunk[path * n..(path + 1) * n];
        basis.eval_into(p, &mut scratch, &mut phi)?;
        for i in 0..n {
            acc.sum_x[i] += x[i];
            acc.sum_x4[i] += x[i] * x[i] * x[i] * x[i];
            for j in 0..n {
                acc.sum_xx[(i, j)] += x[i] * x[j];
            }
            for (j, &pv) in phi.iter().enumerate().skip(1) {
                acc.sum_xphi[(i, j - 1)] += x[i] * pv;
            }
        }
    }
    Ok(acc)
}

fn finish_step(total: EnsemblePartial, paths: usize) -> EnsembleStep {
    let inv = 1.0 / paths as f64;
    let mean = &total.sum_x * inv;
    let second = &total.sum_xx * inv;
    let cross = &total.sum_xphi * inv;
    let n = mean.len();
    let mut se_mean = DVector::zeros(n);
    let mut se_second = DVector::zeros(n);
    for i in 0..n {
        let var_x = (second[(i, i)] - mean[i] * mean[i]).max(0.0);
        let var_x2 = (total.sum_x4[i] * inv - second[(i, i)] * second[(i, i)]).max(0.0);
        se_mean[i] = (var_x * inv).sqrt();
        se_second[i] = (var_x2 * inv).sqrt();
    }
    EnsembleStep {
        stats: ReferenceStats {
            mean,
            second,
            cross,
        },
        se_mean,
        se_second,
    }
}

fn advance_chunk<D>(dynamics: &D, pchunk: &[f64], schunk: &mut [f64], n: usize, h: f64) -> Result<()>
where
    D: Fn(&[f64], &[f64], &mut [f64]) + Sync,
{
    let count = schunk.len() / n;
    let d = pchunk.len() / count;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for path in 0..count {
        let p = &pchunk[path * d..(path + 1) * d];
        let x = &mut schunk[path * n..(path + 1) * n];
        dynamics(x, p, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        dynamics(&tmp, p, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        dynamics(&tmp, p, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        dynamics(&tmp, p, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { node: p.to_vec() });
        }
    }
    Ok(())
}

impl ReferenceStatsProvider for EnsembleReference {
    fn stats_at(&self, k: usize) -> Result<ReferenceStats> {
        self.steps
            .get(k)
            .map(|s| s.stats.clone())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "step {k} beyond recorded ensemble horizon {}",
                    self.steps.len().saturating_sub(1)
                ))
            })
    }
}

/// Exact moments of a stored coefficient trajectory. The cross moments of an
/// expansion against its own basis are the scaled coefficients, so a
/// reconstruction from these statistics should reproduce the trajectory.
#[derive(Debug, Clone)]
pub struct SurrogateTrajectoryReference {
    basis: BasisSet,
    output_dims: usize,
    states: Vec<DVector<f64>>,
}

impl SurrogateTrajectoryReference {
    pub fn from_series(
        basis: BasisSet,
        output_dims: usize,
        series: &CoefficientSeries,
    ) -> Result<Self> {
        let expected = output_dims * basis.len();
        for state in series.states() {
            if state.len() != expected {
                return Err(Error::DimensionMismatch {
                    context: "trajectory coefficient state",
                    expected,
                    actual: state.len(),
                });
            }
        }
        Ok(Self {
            basis,
            output_dims,
            states: series.states().to_vec(),
        })
    }
}

impl ReferenceStatsProvider for SurrogateTrajectoryReference {
    fn stats_at(&self, k: usize) -> Result<ReferenceStats> {
        let state = self.states.get(k).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "step {k} beyond recorded trajectory horizon {}",
                self.states.len().saturating_sub(1)
            ))
        })?;
        let expansion = PCExpansion::from_flat(self.basis.clone(), self.output_dims, state)?;
        let (mean, second) = expansion.moments();
        let nn1 = self.basis.len();
        let mut cross = DMatrix::zeros(self.output_dims, nn1 - 1);
        for j in 1..nn1 {
            cross.set_column(
                j - 1,
                &(expansion.coefficients().column(j) * self.basis.norms()[j]),
            );
        }
        Ok(ReferenceStats {
            mean,
            second,
            cross,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, UniformParameter};
    use crate::expectation::MomentSet;
    use crate::propagator::{propagate_gp, reconstruct_cpc, GPSurrogateODE};
    use approx::assert_abs_diff_eq;

    fn unit_basis(order: usize) -> BasisSet {
        build_basis(&UniformParameter::unit(1).unwrap(), order)
    }

    #[test]
    fn decay_moments_match_hand_integrals() {
        // E[e^{-p}] = 1 - 1/e and E[e^{-2p}] = (1 - e^{-2})/2 for p ~ U(0,1).
        let reference = LinearDecayReference::new(unit_basis(2), 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(reference.mean_at(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(reference.second_at(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            reference.mean_at(1.0),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            reference.second_at(1.0),
            (1.0 - (-2.0f64).exp()) / 2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn decay_mean_agrees_with_quadrature() {
        let basis = unit_basis(1);
        let reference = LinearDecayReference::new(basis.clone(), 0.1, 1.0).unwrap();
        let engine = ExpectationEngine::quadrature(64).unwrap();
        for &t in &[0.05, 1.0, 4.0, 10.0] {
            let quad = engine
                .expect(basis.param(), |p| {
                    DVector::from_element(1, (-p[0] * t).exp())
                })
                .unwrap();
            assert_abs_diff_eq!(reference.mean_at(t), quad[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn decay_stats_form_valid_moment_sets() {
        let reference = LinearDecayReference::new(unit_basis(3), 0.25, 1.0).unwrap();
        for k in [0usize, 1, 4, 40] {
            let stats = reference.stats_at(k).unwrap();
            assert_eq!(stats.cross.ncols(), 3);
            // Mean, second moment, and cross moments must be mutually
            // consistent enough to pass the covariance feasibility check.
            MomentSet::new(stats.mean, stats.second, stats.cross).unwrap();
        }
    }

    #[test]
    fn decay_cross_at_zero_time_vanishes() {
        // x(0) is deterministic, so E[x phi_j] = E[phi_j] = 0 for j >= 1.
        let reference = LinearDecayReference::new(unit_basis(2), 0.1, 1.0).unwrap();
        let stats = reference.stats_at(0).unwrap();
        assert!(stats.cross.amax() <= 1e-15);
    }

    #[test]
    fn decay_reference_requires_one_dimension() {
        let param = UniformParameter::unit(2).unwrap();
        let basis = build_basis(&param, 1);
        assert!(LinearDecayReference::new(basis, 0.1, 1.0).is_err());
    }

    fn decay_dynamics(x: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = -p[0] * x[0];
    }

    #[test]
    fn ensemble_is_bit_reproducible_for_a_seed() {
        let basis = unit_basis(2);
        let x0 = DVector::from_element(1, 1.0);
        let a = EnsembleReference::generate(&basis, decay_dynamics, &x0, 0.05, 8, 3000, 7).unwrap();
        let b = EnsembleReference::generate(&basis, decay_dynamics, &x0, 0.05, 8, 3000, 7).unwrap();
        for k in 0..a.len() {
            let (sa, sb) = (a.stats_at(k).unwrap(), b.stats_at(k).unwrap());
            assert_eq!(sa.mean, sb.mean);
            assert_eq!(sa.second, sb.second);
            assert_eq!(sa.cross, sb.cross);
        }
        let c = EnsembleReference::generate(&basis, decay_dynamics, &x0, 0.05, 8, 3000, 8).unwrap();
        assert_ne!(a.stats_at(8).unwrap().mean, c.stats_at(8).unwrap().mean);
    }

    #[test]
    fn ensemble_mean_matches_closed_form_within_noise() {
        let basis = unit_basis(1);
        let x0 = DVector::from_element(1, 1.0);
        let paths = 20_000;
        let ens =
            EnsembleReference::generate(&basis, decay_dynamics, &x0, 0.1, 10, paths, 42).unwrap();
        let exact = LinearDecayReference::new(basis, 0.1, 1.0).unwrap();
        for k in [0usize, 5, 10] {
            let stats = ens.stats_at(k).unwrap();
            let t = k as f64 * 0.1;
            let tol_mean = 5.0 * ens.se_mean(k)[0] + 1e-9;
            let tol_second = 5.0 * ens.se_second(k)[0] + 1e-9;
            assert!(
                (stats.mean[0] - exact.mean_at(t)).abs() <= tol_mean,
                "mean off at step {k}"
            );
            assert!(
                (stats.second[(0, 0)] - exact.second_at(t)).abs() <= tol_second,
                "second moment off at step {k}"
            );
        }
        // The initial state is shared, so step 0 carries no sampling noise.
        assert_eq!(ens.se_mean(0)[0], 0.0);
        let s5 = ens.stats_at(5).unwrap();
        MomentSet::new(s5.mean, s5.second, s5.cross).unwrap();
    }

    #[test]
    fn ensemble_restriction_slices_cross_columns() {
        let big = unit_basis(3);
        let small = unit_basis(1);
        let x0 = DVector::from_element(1, 1.0);
        let ens =
            EnsembleReference::generate(&big, decay_dynamics, &x0, 0.1, 4, 2000, 11).unwrap();
        let restricted = ens.restrict_to(&small).unwrap();
        for k in 0..=4 {
            let full = ens.stats_at(k).unwrap();
            let cut = restricted.stats_at(k).unwrap();
            assert_eq!(cut.mean, full.mean);
            assert_eq!(cut.second, full.second);
            assert_eq!(cut.cross, full.cross.columns(0, 1).into_owned());
        }
        // Mismatched domain is rejected.
        let shifted = build_basis(&UniformParameter::symmetric_unit(1).unwrap(), 1);
        assert!(ens.restrict_to(&shifted).is_err());
        // Restriction cannot grow the basis.
        assert!(restricted.restrict_to(&big).is_err());
    }

    #[test]
    fn ensemble_reports_blowup_with_the_parameter_draw() {
        let basis = unit_basis(1);
        let x0 = DVector::from_element(1, 1.0);
        let err = EnsembleReference::generate(
            &basis,
            |x: &[f64], _p: &[f64], out: &mut [f64]| {
                out[0] = x[0] * x[0] * 1e4;
            },
            &x0,
            1.0,
            40,
            16,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteEvaluation { .. }));
    }

    #[test]
    fn ensemble_horizon_is_enforced() {
        let basis = unit_basis(1);
        let x0 = DVector::from_element(1, 1.0);
        let ens = EnsembleReference::generate(&basis, decay_dynamics, &x0, 0.1, 3, 64, 1).unwrap();
        assert_eq!(ens.len(), 4);
        assert!(ens.stats_at(3).is_ok());
        assert!(ens.stats_at(4).is_err());
    }

    #[test]
    fn trajectory_reference_reconstructs_its_own_states() {
        // March the projected surrogate of the linear decay, then treat the
        // trajectory's exact moments as reference data: reconstruction must
        // return the trajectory itself, including coefficient signs.
        let basis = unit_basis(1);
        let engine = ExpectationEngine::quadrature(6).unwrap();
        let ode = GPSurrogateODE::new(basis.clone(), engine, 1, decay_dynamics).unwrap();
        let x0 = DVector::from_column_slice(&[1.0, 0.0]);
        let series = propagate_gp(&ode, &x0, 12, 0.1).unwrap();
        let provider =
            SurrogateTrajectoryReference::from_series(basis.clone(), 1, &series).unwrap();
        for k in 0..series.len() {
            let rebuilt = reconstruct_cpc(&provider, &basis, k).unwrap();
            let diff = (rebuilt - series.at(k)).norm();
            assert!(diff <= 1e-10, "step {k} reconstruction off by {diff}");
        }
        assert!(provider.stats_at(series.len()).is_err());
    }
}
