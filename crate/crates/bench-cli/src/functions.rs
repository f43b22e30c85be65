//! Registry of candidate test functions for the moment-error sweeps.
//!
//! Every candidate is a scalar function of one uniform parameter on
//! `[-1, 1]`. The four standard candidates probe different approximation
//! regimes:
//!
//! * `delta8`  — `f(Δ) = Δ⁸`, a pure even polynomial: projections become
//!   exact once the order reaches the degree.
//! * `rational` — `f(Δ) = 1 / (1 + Δ + Δ²)`, analytic on the interval with
//!   complex poles on the unit circle, so coefficients decay geometrically.
//! * `sin2` — `f(Δ) = sin²(3Δ)`, oscillatory with super-geometric decay.
//! * `gaussbump` — `f(Δ) = e^(-10Δ²)`, a sharp bump that needs moderate
//!   orders before the error leaves the plateau.
//!
//! A `custom` candidate evaluates a user-supplied polynomial in monomial
//! coefficients, lowest degree first.

use nalgebra::DVector;
use polychaos::{Error, Result};

/// Identifier strings for the four standard candidates, in canonical order.
pub const STANDARD_IDS: [&str; 4] = ["delta8", "rational", "sin2", "gaussbump"];

/// A scalar test function of one parameter on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    /// `Δ⁸`.
    Delta8,
    /// `1 / (1 + Δ + Δ²)`.
    Rational,
    /// `sin²(3Δ)`.
    Sin2,
    /// `e^(-10Δ²)`.
    GaussBump,
    /// Polynomial `c₀ + c₁Δ + c₂Δ² + …` with the given coefficients.
    Custom(Vec<f64>),
}

impl Candidate {
    /// Resolves an identifier from config or the command line. The `custom`
    /// id requires monomial coefficients supplied alongside it.
    pub fn from_id(id: &str, custom_coefficients: Option<&[f64]>) -> Result<Self> {
        match id {
            "delta8" => Ok(Self::Delta8),
            "rational" => Ok(Self::Rational),
            "sin2" => Ok(Self::Sin2),
            "gaussbump" => Ok(Self::GaussBump),
            "custom" => {
                let coefficients = custom_coefficients.ok_or_else(|| {
                    Error::InvalidConfig(
                        "function id `custom` needs polynomial coefficients \
                         ([custom] coefficients = [...] in the config file)"
                            .into(),
                    )
                })?;
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "custom polynomial coefficients must be non-empty and finite".into(),
                    ));
                }
                Ok(Self::Custom(coefficients.to_vec()))
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown function id `{other}` (expected one of delta8, rational, sin2, \
                 gaussbump, custom)"
            ))),
        }
    }

    /// The identifier used in config files and CSV rows.
    pub fn id(&self) -> &'static str {
        match self {
            Self::Delta8 => "delta8",
            Self::Rational => "rational",
            Self::Sin2 => "sin2",
            Self::GaussBump => "gaussbump",
            Self::Custom(_) => "custom",
        }
    }

    /// The four standard candidates in canonical order.
    pub fn standard_set() -> Vec<Candidate> {
        vec![Self::Delta8, Self::Rational, Self::Sin2, Self::GaussBump]
    }

    /// Evaluates the candidate at one parameter value.
    pub fn eval(&self, delta: f64) -> f64 {
        match self {
            Self::Delta8 => delta.powi(8),
            Self::Rational => 1.0 / (1.0 + delta + delta * delta),
            Self::Sin2 => {
                let s = (3.0 * delta).sin();
                s * s
            }
            Self::GaussBump => (-10.0 * delta * delta).exp(),
            Self::Custom(coefficients) => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * delta + c)
            }
        }
    }

    /// Exact polynomial degree when the candidate is a polynomial, so callers
    /// can pick quadrature rules that integrate it without truncation error.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            Self::Delta8 => Some(8),
            Self::Custom(coefficients) => Some(
                coefficients
                    .iter()
                    .rposition(|c| *c != 0.0)
                    .unwrap_or(0),
            ),
            _ => None,
        }
    }

    /// The candidate as a single-output closure in the shape the solvers
    /// expect.
    pub fn as_output(&self) -> impl FnMut(&[f64]) -> DVector<f64> + '_ {
        move |p: &[f64]| DVector::from_element(1, self.eval(p[0]))
    }
}
