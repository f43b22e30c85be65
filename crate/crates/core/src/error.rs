//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Numerical failures carry the
//! quantity that tripped the guard (condition estimate, eigenvalue, offending
//! node) so callers can tell a modelling problem from a plumbing bug.

use thiserror::Error;

/// Condition-number ceiling for linear solves. Factorizations whose estimated
/// condition exceeds this are treated as singular rather than silently
/// amplifying rounding error.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("interpolation nodes {i} and {j} share a coordinate; the product-form cardinal basis needs nodes pairwise distinct in every coordinate")]
    CoincidentNodes { i: usize, j: usize },

    #[error("function returned a non-finite value at node {node:?}")]
    NonFiniteEvaluation { node: Vec<f64> },

    #[error("non-finite value in Runge-Kutta stage {stage}")]
    NonFiniteStage { stage: usize },

    #[error("{what} is singular or ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("{what} is not positive semidefinite (eigenvalue {eigenvalue:.6e} below tolerance {tolerance:.6e})")]
    NotPositiveSemidefinite {
        what: &'static str,
        eigenvalue: f64,
        tolerance: f64,
    },

    #[error("matrix does not have orthonormal rows: ||U U^T - I||_F = {deviation:.3e}")]
    InfeasibleU { deviation: f64 },

    #[error("basis too small: moment constraints on {state_dims} outputs need at least {state_dims} non-constant basis terms, basis has {basis_terms}")]
    BasisTooSmall {
        state_dims: usize,
        basis_terms: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
