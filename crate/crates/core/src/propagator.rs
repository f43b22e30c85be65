//! Propagation of chaos coefficients through time.
//!
//! Two mechanisms are combined:
//!
//! * **Galerkin surrogate ODE**: projecting `dx/dt = f(x, p)` onto the basis
//!   gives the deterministic system
//!   `dX/dt = (E[Phi Phi^T] (x) I)^{-1} E[Phi (x) f(X Phi, p)]` on the
//!   flattened coefficients `vec(X)`; its residual is unbiased (`E[e] = 0`)
//!   and mean-square optimal among linear-in-coefficients right sides.
//! * **Data-driven linear propagation**: over a sliding window of coefficient
//!   states, the one-step transition
//!   `M = [sum x^{j+1} (x^j)^T] [sum x^j (x^j)^T]^{-1}` is refitted each step
//!   and applied to the newest state. Windows shorter than the state
//!   dimension cannot determine `M`.
//!
//! The full loop ([`run_algorithm1`]) reconstructs reference coefficients
//! from externally supplied moments at every step (see
//! [`crate::constrained::solve_constrained_galerkin`]), warms up on the
//! surrogate ODE while the window fills, then switches to refitted one-step
//! predictions.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSet;
use crate::constrained::solve_constrained_galerkin;
use crate::error::{Error, Result};
use crate::expectation::{ExpectationEngine, MomentSet};
use crate::numeric;

/// Equally spaced coefficient states; `states[k]` belongs to time `k * step`.
#[derive(Debug, Clone)]
pub struct CoefficientSeries {
    step: f64,
    states: Vec<DVector<f64>>,
}

impl CoefficientSeries {
    pub fn new(step: f64) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive and finite, got {step}"
            )));
        }
        Ok(Self {
            step,
            states: Vec::new(),
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn at(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn time_of(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn push(&mut self, state: DVector<f64>) {
        self.states.push(state);
    }
}

/// Reference statistics of the true solution at one time step.
#[derive(Debug, Clone)]
pub struct ReferenceStats {
    /// E[x], length n.
    pub mean: DVector<f64>,
    /// E[x x^T], n x n.
    pub second: DMatrix<f64>,
    /// E[x phi_1^T] over the non-constant basis functions, n x N.
    pub cross: DMatrix<f64>,
}

/// Supplies reference statistics on the propagation time grid.
pub trait ReferenceStatsProvider {
    fn stats_at(&self, k: usize) -> Result<ReferenceStats>;
}

/// The Galerkin-projected surrogate ODE for chaos coefficients of
/// `dx/dt = f(x, p)`. `dynamics` writes `f(state, parameter)` into its output
/// slice; the projected expectation is evaluated by `engine`.
pub struct GPSurrogateODE<D>
where
    D: Fn(&[f64], &[f64], &mut [f64]),
{
    basis: BasisSet,
    engine: ExpectationEngine,
    state_dims: usize,
    dynamics: D,
}

impl<D> GPSurrogateODE<D>
where
    D: Fn(&[f64], &[f64], &mut [f64]),
{
    pub fn new(
        basis: BasisSet,
        engine: ExpectationEngine,
        state_dims: usize,
        dynamics: D,
    ) -> Result<Self> {
        if state_dims == 0 {
            return Err(Error::InvalidConfig(
                "surrogate ODE needs at least one state dimension".into(),
            ));
        }
        Ok(Self {
            basis,
            engine,
            state_dims,
            dynamics,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn state_dims(&self) -> usize {
        self.state_dims
    }

    /// Flattened coefficient state length, n (N+1).
    pub fn coefficient_dims(&self) -> usize {
        self.state_dims * self.basis.len()
    }

    /// Projected right side at coefficient state `x_pc`:
    /// block j of the result is `E[phi_j f(X phi, p)] / E[phi_j^2]`.
    pub fn rhs(&self, x_pc: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.state_dims;
        let nn1 = self.basis.len();
        if x_pc.len() != n * nn1 {
            return Err(Error::DimensionMismatch {
                context: "coefficient state",
                expected: n * nn1,
                actual: x_pc.len(),
            });
        }
        let coeffs = DMatrix::from_column_slice(n, nn1, x_pc.as_slice());
        let set = self.engine.node_set(self.basis.param())?;
        let mut acc = DVector::zeros(n * nn1);
        let mut fv = vec![0.0; n];
        for i in 0..set.len() {
            let node = set.node(i);
            let w = set.weight(i);
            let phi = self.basis.eval(node)?;
            let x_hat = &coeffs * &phi;
            (self.dynamics)(x_hat.as_slice(), node, &mut fv);
            if fv.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEvaluation {
                    node: node.to_vec(),
                });
            }
            for j in 0..nn1 {
                let scale = w * phi[j];
                for (r, &fr) in fv.iter().enumerate() {
                    acc[j * n + r] += scale * fr;
                }
            }
        }
        for j in 0..nn1 {
            let inv = 1.0 / self.basis.norms()[j];
            for r in 0..n {
                acc[j * n + r] *= inv;
            }
        }
        Ok(acc)
    }
}

/// Constant matrix form of the surrogate ODE for linear dynamics
/// `dx/dt = A(p) x`: block (j, k) of the result is
/// `E[phi_j phi_k A(p)] / E[phi_j^2]`, so `d vec(X)/dt = M vec(X)`.
pub fn linear_surrogate_matrix<A>(
    basis: &BasisSet,
    engine: &ExpectationEngine,
    state_dims: usize,
    a: A,
) -> Result<DMatrix<f64>>
where
    A: Fn(&[f64]) -> DMatrix<f64>,
{
    let n = state_dims;
    let nn1 = basis.len();
    let set = engine.node_set(basis.param())?;
    let mut m = DMatrix::zeros(n * nn1, n * nn1);
    for i in 0..set.len() {
        let node = set.node(i);
        let w = set.weight(i);
        let a_node = a(node);
        if a_node.nrows() != n || a_node.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "system matrix",
                expected: n,
                actual: a_node.nrows().max(a_node.ncols()),
            });
        }
        if a_node.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation {
                node: node.to_vec(),
            });
        }
        let phi = basis.eval(node)?;
        for j in 0..nn1 {
            for k in 0..nn1 {
                let scale = w * phi[j] * phi[k];
                if scale == 0.0 {
                    continue;
                }
                for r in 0..n {
                    for c in 0..n {
                        m[(j * n + r, k * n + c)] += scale * a_node[(r, c)];
                    }
                }
            }
        }
    }
    for j in 0..nn1 {
        let inv = 1.0 / basis.norms()[j];
        for r in 0..n {
            let row = j * n + r;
            for c in 0..m.ncols() {
                m[(row, c)] *= inv;
            }
        }
    }
    Ok(m)
}

/// One classical Runge-Kutta step of size `h`. For a linear right side
/// `v -> M v` this equals multiplication by
/// `I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24`.
pub fn rk4_step<R>(rhs: R, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let check = |v: &DVector<f64>, stage: usize| -> Result<()> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteStage { stage });
        }
        Ok(())
    };
    let k1 = rhs(x)?;
    check(&k1, 1)?;
    let k2 = rhs(&(x + 0.5 * h * &k1))?;
    check(&k2, 2)?;
    let k3 = rhs(&(x + 0.5 * h * &k2))?;
    check(&k3, 3)?;
    let k4 = rhs(&(x + h * &k3))?;
    check(&k4, 4)?;
    Ok(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Marches the surrogate ODE from `x0` for `steps` steps of size `h`.
pub fn propagate_gp<D>(
    ode: &GPSurrogateODE<D>,
    x0: &DVector<f64>,
    steps: usize,
    h: f64,
) -> Result<CoefficientSeries>
where
    D: Fn(&[f64], &[f64], &mut [f64]),
{
    let mut series = CoefficientSeries::new(h)?;
    let mut state = x0.clone();
    series.push(state.clone());
    for _ in 0..steps {
        state = rk4_step(|v| ode.rhs(v), &state, h)?;
        series.push(state.clone());
    }
    Ok(series)
}

/// Fits the one-step linear transition over a window of `q + 1` consecutive
/// states: `M = [sum_{j} x^{j+1} (x^j)^T] [sum_j x^j (x^j)^T]^{-1}`, sums over
/// the q transitions in the window. Fails when the window Gram matrix is
/// rank-deficient (condition above the crate limit), which is guaranteed for
/// q below the state dimension.
pub fn fit_transition(window: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if window.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "transition fit needs at least 2 states, got {}",
            window.len()
        )));
    }
    let dims = window[0].len();
    for state in window {
        if state.len() != dims {
            return Err(Error::DimensionMismatch {
                context: "window state",
                expected: dims,
                actual: state.len(),
            });
        }
    }
    let mut a1 = DMatrix::zeros(dims, dims);
    let mut a0 = DMatrix::zeros(dims, dims);
    for j in 0..window.len() - 1 {
        a1.ger(1.0, &window[j + 1], &window[j], 1.0);
        a0.ger(1.0, &window[j], &window[j], 1.0);
    }
    let mt = numeric::solve_spd(&a0, &a1.transpose(), "transition window Gram matrix")?;
    Ok(mt.transpose())
}

/// Reconstructs the coefficient state whose expansion reproduces the
/// provider's mean and second moment at step `k` exactly (flattened, column
/// major).
pub fn reconstruct_cpc(
    provider: &dyn ReferenceStatsProvider,
    basis: &BasisSet,
    k: usize,
) -> Result<DVector<f64>> {
    let stats = provider.stats_at(k)?;
    let mom = MomentSet::new(stats.mean, stats.second, stats.cross)?;
    let expansion = solve_constrained_galerkin(&mom, basis)?;
    Ok(expansion.flatten())
}

/// Mean and second moment implied by a flattened coefficient state.
pub fn coefficient_moments(
    basis: &BasisSet,
    output_dims: usize,
    state: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let expansion =
        crate::approximators::PCExpansion::from_flat(basis.clone(), output_dims, state)?;
    Ok(expansion.moments())
}

#[derive(Debug, Clone)]
pub struct Algorithm1Options {
    /// Window length q (number of transitions per fit). Must be at least the
    /// coefficient dimension n (N+1) for the Gram matrix to be invertible.
    pub window: usize,
    /// Number of time steps to advance.
    pub steps: usize,
    /// Time step h.
    pub step: f64,
    /// When set, predictions for k >= window are fed back into the next
    /// prediction instead of restarting from the reference reconstruction
    /// (the transition is still fitted on reference states).
    pub free_running: bool,
}

/// Result of [`run_algorithm1`]: per-step predictions, the reference
/// reconstructions they are measured against, and the steps (if any) where a
/// rank-deficient window forced a surrogate-ODE fallback step.
#[derive(Debug, Clone)]
pub struct Algorithm1Run {
    pub predicted: CoefficientSeries,
    pub reference: CoefficientSeries,
    pub fallback_steps: Vec<usize>,
}

/// Runs the windowed propagation loop.
///
/// Step k < window: advance the surrogate ODE (warm-up; the window has not
/// filled). Step k >= window: refit the transition on the last `window`
/// reference transitions and predict one step ahead from the newest reference
/// state (or from the previous prediction in free-running mode). Reference
/// coefficient states are reconstructed from the provider's moments at every
/// step; prediction index k in the result is the estimate of reference index
/// k, with index 0 shared.
pub fn run_algorithm1<D>(
    ode: &GPSurrogateODE<D>,
    provider: &dyn ReferenceStatsProvider,
    opts: &Algorithm1Options,
) -> Result<Algorithm1Run>
where
    D: Fn(&[f64], &[f64], &mut [f64]),
{
    if opts.window == 0 {
        return Err(Error::InvalidConfig("window length must be positive".into()));
    }
    let h = opts.step;
    let mut reference = CoefficientSeries::new(h)?;
    let mut predicted = CoefficientSeries::new(h)?;
    let mut fallback_steps = Vec::new();

    let x0 = reconstruct_cpc(provider, ode.basis(), 0)?;
    if x0.len() != ode.coefficient_dims() {
        return Err(Error::DimensionMismatch {
            context: "reconstructed coefficient state",
            expected: ode.coefficient_dims(),
            actual: x0.len(),
        });
    }
    reference.push(x0.clone());
    predicted.push(x0.clone());
    let mut gp_state = x0;

    for k in 0..opts.steps {
        if k < opts.window {
            gp_state = rk4_step(|v| ode.rhs(v), &gp_state, h)?;
            predicted.push(gp_state.clone());
        } else {
            let window = &reference.states()[k - opts.window..=k];
            let source = if opts.free_running {
                predicted.at(k).clone()
            } else {
                reference.at(k).clone()
            };
            match fit_transition(window) {
                Ok(m) => predicted.push(&m * source),
                Err(Error::IllConditioned { .. }) => {
                    // Degenerate window: take one surrogate-ODE step instead
                    // and report the step index.
                    fallback_steps.push(k);
                    predicted.push(rk4_step(|v| ode.rhs(v), &source, h)?);
                }
                Err(other) => return Err(other),
            }
        }
        reference.push(reconstruct_cpc(provider, ode.basis(), k + 1)?);
    }
    Ok(Algorithm1Run {
        predicted,
        reference,
        fallback_steps,
    })
}
