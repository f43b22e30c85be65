//! Polynomial chaos surrogates for functions and dynamical systems with
//! uniformly distributed parameters.
//!
//! The crate covers three layers:
//!
//! * **Baselines** ([`approximators`]): Galerkin projection, stochastic
//!   collocation on scattered nodes, and discrete least squares, all producing
//!   evaluable surrogates with closed-form expansion moments.
//! * **Moment-constrained solvers** ([`constrained`]): coefficient matrices of
//!   the form `[mean, L U W1^{-1/2}]` that reproduce a prescribed mean and
//!   second moment exactly for any row-orthonormal `U`, and the projections
//!   that pick the `U` closest to the unconstrained Galerkin or least-squares
//!   optimum.
//! * **Coefficient propagation** ([`propagator`]): a Galerkin surrogate ODE
//!   for chaos coefficients, plus a data-driven linear one-step propagator
//!   fitted over a sliding window of constrained reconstructions.
//!
//! All expectations run through [`expectation::ExpectationEngine`], which
//! fixes node order and summation order so results are reproducible bit for
//! bit given a configuration and seed.

pub mod approximators;
pub mod basis;
pub mod constrained;
pub mod error;
pub mod expectation;
mod numeric;
pub mod propagator;
pub mod reference;

pub use error::{Error, Result};
