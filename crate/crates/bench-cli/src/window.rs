//! Window-length study for the windowed linear propagator.
//!
//! The one-step transition matrix is refitted at every step on the most
//! recent `q` reference transitions. The coefficient flow of the linear
//! decay system is not autonomous, so a longer window averages the
//! transition over a longer arc of a time-varying map and the one-step fit
//! degrades: terminal error grows with `q`. The sweep reports terminal-time
//! moment errors for `q = factor · n(N+1)` across a list of factors.

use polychaos::basis::{build_basis, UniformParameter};
use polychaos::expectation::ExpectationEngine;
use polychaos::propagator::{
    coefficient_moments, run_algorithm1, Algorithm1Options, GPSurrogateODE,
};
use polychaos::reference::LinearDecayReference;
use polychaos::{Error, Result};

use crate::ode::{linear_dynamics, Dynamics, DEFAULT_HORIZON, DEFAULT_STEP};
use crate::output::Field;
use crate::sweep::ERROR_FLOOR;

/// Schema tag written at the top of the window-study CSV.
pub const WINDOW_SCHEMA: &str = "pcbench-window v1";

/// Column names of the window-study CSV.
pub const WINDOW_HEADER: [&str; 5] = [
    "kappa",
    "factor",
    "window",
    "terminal_mean_err",
    "terminal_var_err",
];

/// Default window multipliers.
pub const DEFAULT_FACTORS: [usize; 3] = [1, 5, 10];

/// Inputs of one window study.
#[derive(Debug, Clone)]
pub struct WindowSettings {
    /// Approximation order (the study is about window length, not order).
    pub kappa: usize,
    /// Window multipliers; the fit window is `factor · n(N+1)`.
    pub factors: Vec<usize>,
    /// Integrator step h.
    pub step: f64,
    /// Final time; errors are reported at this time.
    pub horizon: f64,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            kappa: 1,
            factors: DEFAULT_FACTORS.to_vec(),
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
        }
    }
}

/// Terminal-time errors of one window length.
#[derive(Debug, Clone)]
pub struct WindowRow {
    pub kappa: usize,
    pub factor: usize,
    pub window: usize,
    pub terminal_mean_err: f64,
    pub terminal_var_err: f64,
}

impl WindowRow {
    pub fn to_fields(&self) -> Vec<Field> {
        vec![
            Field::Int(self.kappa as u64),
            Field::Int(self.factor as u64),
            Field::Int(self.window as u64),
            Field::Float(self.terminal_mean_err),
            Field::Float(self.terminal_var_err),
        ]
    }
}

/// Runs the linear tracking experiment once per window factor and reports
/// the terminal moment errors, rows sorted by factor ascending.
pub fn run_window_sweep(settings: &WindowSettings) -> Result<Vec<WindowRow>> {
    if settings.factors.is_empty() {
        return Err(Error::InvalidConfig(
            "window study needs at least one factor".into(),
        ));
    }
    if settings.factors.contains(&0) {
        return Err(Error::InvalidConfig(
            "window factors must be at least 1".into(),
        ));
    }
    if !settings.step.is_finite() || settings.step <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "time step must be positive and finite, got {}",
            settings.step
        )));
    }
    if !settings.horizon.is_finite() || settings.horizon <= settings.step {
        return Err(Error::InvalidConfig(format!(
            "horizon must cover at least one step, got {}",
            settings.horizon
        )));
    }
    let mut factors = settings.factors.clone();
    factors.sort_unstable();
    factors.dedup();

    let param = UniformParameter::unit(1)?;
    let basis = build_basis(&param, settings.kappa);
    let steps = (settings.horizon / settings.step).round() as usize;
    let reference = LinearDecayReference::new(basis.clone(), settings.step, 1.0)?;

    let terminal_t = steps as f64 * settings.step;
    let ref_mean = reference.mean_at(terminal_t);
    let ref_second = reference.second_at(terminal_t);
    let ref_var = ref_second - ref_mean * ref_mean;

    let mut rows = Vec::new();
    for &factor in &factors {
        let window = factor * basis.len();
        if window >= steps {
            return Err(Error::InvalidConfig(format!(
                "window {window} does not fit in {steps} steps; shrink the factor or extend \
                 the horizon"
            )));
        }
        let engine = ExpectationEngine::quadrature(settings.kappa + 2)?;
        let ode = GPSurrogateODE::new(basis.clone(), engine, 1, linear_dynamics as Dynamics)?;
        let opts = Algorithm1Options {
            window,
            steps,
            step: settings.step,
            free_running: false,
        };
        let run = run_algorithm1(&ode, &reference, &opts)?;
        let (mean, second) = coefficient_moments(&basis, 1, run.predicted.at(steps))?;
        let mean = mean[0];
        let var = second[(0, 0)] - mean * mean;
        rows.push(WindowRow {
            kappa: settings.kappa,
            factor,
            window,
            terminal_mean_err: (mean - ref_mean).abs().max(ERROR_FLOOR),
            terminal_var_err: (var - ref_var).abs().max(ERROR_FLOOR),
        });
    }
    Ok(rows)
}
