//! Moment-tracking experiments for parametric scalar ODEs.
//!
//! Two systems, both with deterministic initial condition `x(0) = 1` and a
//! uniform parameter `a ~ U[0, 1]`:
//!
//! * linear:    `ẋ = -a x`, with closed-form reference moments
//!   `E[x(t)] = (1 - e^(-t)) / t` and `E[x²(t)] = (1 - e^(-2t)) / (2t)`;
//! * nonlinear: `ẋ = -a x² + sin x`, with a seeded Monte Carlo ensemble as
//!   the reference.
//!
//! For each order `κ` the experiment integrates the projected surrogate ODE
//! (the spectral propagator) and runs the windowed linear propagator that
//! refits a one-step transition matrix on the most recent reference
//! reconstructions. Each output row carries the reference, both predictions,
//! and their absolute moment errors at one time step.

use nalgebra::DVector;
use polychaos::basis::{build_basis, BasisSet, UniformParameter};
use polychaos::expectation::ExpectationEngine;
use polychaos::propagator::{
    coefficient_moments, propagate_gp, run_algorithm1, Algorithm1Options, GPSurrogateODE,
    ReferenceStatsProvider,
};
use polychaos::reference::{EnsembleReference, LinearDecayReference};
use polychaos::{Error, Result};

use crate::output::Field;
use crate::sweep::ERROR_FLOOR;

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 0.01;

/// Default horizon; both experiments run on `t ∈ [0, 10]`.
pub const DEFAULT_HORIZON: f64 = 10.0;

/// Default Monte Carlo ensemble size for the nonlinear reference.
pub const DEFAULT_PATHS: usize = 100_000;

/// Gauss-Legendre points for projecting the nonlinear right side. The
/// integrands are entire in the parameter, so 64 points leave truncation
/// error far below the tracked moment errors.
pub const GP_RHS_POINTS: usize = 64;

/// Schema tag written at the top of the time-series CSV.
pub const ODE_SCHEMA: &str = "pcbench-ode v1";

/// Column names of the time-series CSV. The `_se` columns carry the Monte
/// Carlo standard errors of the reference mean and raw second moment (zero
/// for the analytic linear reference), documenting the reference noise floor
/// next to the errors measured against it.
pub const ODE_HEADER: [&str; 15] = [
    "system",
    "kappa",
    "t",
    "ref_mean",
    "ref_var",
    "ref_mean_se",
    "ref_second_se",
    "gp_mean",
    "gp_var",
    "gp_mean_err",
    "gp_var_err",
    "windowed_mean",
    "windowed_var",
    "windowed_mean_err",
    "windowed_var_err",
];

/// In-place dynamics signature shared by the surrogate ODE and the ensemble.
pub type Dynamics = fn(&[f64], &[f64], &mut [f64]);

/// `ẋ = -a x`.
pub fn linear_dynamics(x: &[f64], p: &[f64], out: &mut [f64]) {
    out[0] = -p[0] * x[0];
}

/// `ẋ = -a x² + sin x`.
pub fn nonlinear_dynamics(x: &[f64], p: &[f64], out: &mut [f64]) {
    out[0] = -p[0] * x[0] * x[0] + x[0].sin();
}

/// Which of the two benchmark systems to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeSystem {
    Linear,
    Nonlinear,
}

impl OdeSystem {
    /// The identifier used in config files and CSV rows.
    pub fn id(self) -> &'static str {
        match self {
            OdeSystem::Linear => "linear",
            OdeSystem::Nonlinear => "nonlinear",
        }
    }

    /// Resolves an identifier from config or the command line.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "linear" => Ok(OdeSystem::Linear),
            "nonlinear" => Ok(OdeSystem::Nonlinear),
            other => Err(Error::InvalidConfig(format!(
                "unknown system id `{other}` (expected linear or nonlinear)"
            ))),
        }
    }
}

/// Inputs of one tracking experiment.
#[derive(Debug, Clone)]
pub struct OdeSettings {
    pub system: OdeSystem,
    /// Approximation orders; sorted and deduplicated before the run.
    pub kappas: Vec<usize>,
    /// Integrator step h.
    pub step: f64,
    /// Final time; the step count is `round(horizon / step)`.
    pub horizon: f64,
    /// Window length multiplier: the fit window is `factor · n(N+1)`.
    pub window_factor: usize,
    /// Monte Carlo paths for the nonlinear reference.
    pub paths: usize,
    /// Seed for the Monte Carlo parameter draws.
    pub seed: u64,
    /// Feed predictions back instead of restarting from the reference
    /// reconstruction at each step.
    pub free_running: bool,
}

/// One time step of one order: reference, both predictions, and errors.
#[derive(Debug, Clone)]
pub struct OdeRow {
    pub system: &'static str,
    pub kappa: usize,
    pub t: f64,
    pub ref_mean: f64,
    pub ref_var: f64,
    pub ref_mean_se: f64,
    pub ref_second_se: f64,
    pub gp_mean: f64,
    pub gp_var: f64,
    pub gp_mean_err: f64,
    pub gp_var_err: f64,
    pub windowed_mean: f64,
    pub windowed_var: f64,
    pub windowed_mean_err: f64,
    pub windowed_var_err: f64,
}

impl OdeRow {
    pub fn to_fields(&self) -> Vec<Field> {
        vec![
            Field::Str(self.system),
            Field::Int(self.kappa as u64),
            Field::Float(self.t),
            Field::Float(self.ref_mean),
            Field::Float(self.ref_var),
            Field::Float(self.ref_mean_se),
            Field::Float(self.ref_second_se),
            Field::Float(self.gp_mean),
            Field::Float(self.gp_var),
            Field::Float(self.gp_mean_err),
            Field::Float(self.gp_var_err),
            Field::Float(self.windowed_mean),
            Field::Float(self.windowed_var),
            Field::Float(self.windowed_mean_err),
            Field::Float(self.windowed_var_err),
        ]
    }
}

/// Result of one tracking experiment: the table rows plus, per order, the
/// steps where a degenerate window forced a surrogate fallback (expected in
/// the first few fitted steps while the variance is still near zero).
#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub rows: Vec<OdeRow>,
    pub fallback_steps: Vec<(usize, Vec<usize>)>,
}

fn validate(settings: &OdeSettings) -> Result<usize> {
    if settings.kappas.is_empty() {
        return Err(Error::InvalidConfig(
            "tracking experiment needs at least one order".into(),
        ));
    }
    if !settings.step.is_finite() || settings.step <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "time step must be positive and finite, got {}",
            settings.step
        )));
    }
    if !settings.horizon.is_finite() || settings.horizon <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "horizon must be positive and finite, got {}",
            settings.horizon
        )));
    }
    if settings.window_factor == 0 {
        return Err(Error::InvalidConfig(
            "window factor must be at least 1".into(),
        ));
    }
    let steps = (settings.horizon / settings.step).round() as usize;
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "horizon shorter than one step".into(),
        ));
    }
    Ok(steps)
}

/// Deterministic start `x(0) = 1` as a coefficient state: mean one, every
/// higher coefficient zero.
fn deterministic_start(basis: &BasisSet) -> DVector<f64> {
    let mut x0 = DVector::zeros(basis.len());
    x0[0] = 1.0;
    x0
}

/// Runs the experiment for every requested order and assembles the rows in
/// (κ ascending, t ascending) order. The nonlinear ensemble is generated
/// once at the largest order and restricted to the smaller bases, so every
/// order is measured against the identical parameter draw.
pub fn run_ode_experiment(settings: &OdeSettings) -> Result<OdeOutcome> {
    let steps = validate(settings)?;
    let mut kappas = settings.kappas.clone();
    kappas.sort_unstable();
    kappas.dedup();

    let param = UniformParameter::unit(1)?;
    let x0 = DVector::from_element(1, 1.0);

    let master_ensemble = match settings.system {
        OdeSystem::Linear => None,
        OdeSystem::Nonlinear => {
            let master_basis = build_basis(&param, *kappas.last().unwrap());
            Some(EnsembleReference::generate(
                &master_basis,
                nonlinear_dynamics as Dynamics,
                &x0,
                settings.step,
                steps,
                settings.paths,
                settings.seed,
            )?)
        }
    };

    let mut rows = Vec::new();
    let mut fallback_steps = Vec::new();
    for &kappa in &kappas {
        let basis = build_basis(&param, kappa);
        let (engine, dynamics): (ExpectationEngine, Dynamics) = match settings.system {
            OdeSystem::Linear => (
                // Integrands φ_j · a · (XΦ) have degree 2κ + 1; κ + 2 points
                // integrate them exactly.
                ExpectationEngine::quadrature(kappa + 2)?,
                linear_dynamics,
            ),
            OdeSystem::Nonlinear => (ExpectationEngine::quadrature(GP_RHS_POINTS)?, nonlinear_dynamics),
        };
        let ode = GPSurrogateODE::new(basis.clone(), engine, 1, dynamics)?;

        let linear_reference = match settings.system {
            OdeSystem::Linear => Some(LinearDecayReference::new(basis.clone(), settings.step, 1.0)?),
            OdeSystem::Nonlinear => None,
        };
        let ensemble = match &master_ensemble {
            Some(master) => Some(master.restrict_to(&basis)?),
            None => None,
        };
        let provider: &dyn ReferenceStatsProvider = match (&linear_reference, &ensemble) {
            (Some(reference), _) => reference,
            (None, Some(reference)) => reference,
            (None, None) => unreachable!("one reference is always constructed"),
        };

        let gp_series = propagate_gp(&ode, &deterministic_start(&basis), steps, settings.step)?;
        let opts = Algorithm1Options {
            window: settings.window_factor * basis.len(),
            steps,
            step: settings.step,
            free_running: settings.free_running,
        };
        let run = run_algorithm1(&ode, provider, &opts)?;
        if !run.fallback_steps.is_empty() {
            fallback_steps.push((kappa, run.fallback_steps.clone()));
        }

        for k in 0..=steps {
            let t = k as f64 * settings.step;
            let stats = provider.stats_at(k)?;
            let ref_mean = stats.mean[0];
            let ref_var = stats.second[(0, 0)] - ref_mean * ref_mean;
            let (ref_mean_se, ref_second_se) = match &ensemble {
                Some(e) => (e.se_mean(k)[0], e.se_second(k)[0]),
                None => (0.0, 0.0),
            };

            let (gp_mean, gp_second) = coefficient_moments(&basis, 1, gp_series.at(k))?;
            let gp_mean = gp_mean[0];
            let gp_var = gp_second[(0, 0)] - gp_mean * gp_mean;

            let (win_mean, win_second) = coefficient_moments(&basis, 1, run.predicted.at(k))?;
            let win_mean = win_mean[0];
            let win_var = win_second[(0, 0)] - win_mean * win_mean;

            rows.push(OdeRow {
                system: settings.system.id(),
                kappa,
                t,
                ref_mean,
                ref_var,
                ref_mean_se,
                ref_second_se,
                gp_mean,
                gp_var,
                gp_mean_err: (gp_mean - ref_mean).abs().max(ERROR_FLOOR),
                gp_var_err: (gp_var - ref_var).abs().max(ERROR_FLOOR),
                windowed_mean: win_mean,
                windowed_var: win_var,
                windowed_mean_err: (win_mean - ref_mean).abs().max(ERROR_FLOOR),
                windowed_var_err: (win_var - ref_var).abs().max(ERROR_FLOOR),
            });
        }
    }
    Ok(OdeOutcome {
        rows,
        fallback_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_settings(kappas: Vec<usize>, horizon: f64) -> OdeSettings {
        OdeSettings {
            system: OdeSystem::Linear,
            kappas,
            step: DEFAULT_STEP,
            horizon,
            window_factor: 1,
            paths: DEFAULT_PATHS,
            seed: 42,
            free_running: false,
        }
    }

    #[test]
    fn system_ids_round_trip() {
        for system in [OdeSystem::Linear, OdeSystem::Nonlinear] {
            assert_eq!(OdeSystem::from_id(system.id()).unwrap(), system);
        }
        assert!(OdeSystem::from_id("lorenz").is_err());
    }

    #[test]
    fn linear_reference_columns_match_the_closed_form() {
        let outcome = run_ode_experiment(&linear_settings(vec![1], 0.2)).unwrap();
        let rows = &outcome.rows;
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[0].t, 0.0);
        assert!((rows[0].ref_mean - 1.0).abs() <= 1e-14);
        assert!(rows[0].ref_var.abs() <= 1e-14);
        let t = rows[10].t;
        assert!((t - 0.1).abs() <= 1e-12);
        let mean = (1.0 - (-t).exp()) / t;
        let second = (1.0 - (-2.0 * t).exp()) / (2.0 * t);
        assert!((rows[10].ref_mean - mean).abs() <= 1e-12);
        assert!((rows[10].ref_var - (second - mean * mean)).abs() <= 1e-12);
        assert_eq!(rows[0].ref_mean_se, 0.0);
    }

    #[test]
    fn windowed_tracking_beats_the_surrogate_at_the_end_of_a_short_run() {
        let outcome = run_ode_experiment(&linear_settings(vec![1], 2.0)).unwrap();
        let last = outcome.rows.last().unwrap();
        assert!(
            last.windowed_mean_err < last.gp_mean_err,
            "windowed {} vs surrogate {}",
            last.windowed_mean_err,
            last.gp_mean_err
        );
        assert!(last.windowed_mean_err <= 1e-4);
    }

    #[test]
    fn rows_are_sorted_by_order_then_time_and_match_the_header_width() {
        let outcome = run_ode_experiment(&linear_settings(vec![2, 1], 0.1)).unwrap();
        let rows = &outcome.rows;
        assert_eq!(rows.len(), 2 * 11);
        assert!(rows.windows(2).all(|w| {
            (w[0].kappa, w[0].t) <= (w[1].kappa, w[1].t)
        }));
        assert_eq!(rows[0].to_fields().len(), ODE_HEADER.len());
    }

    #[test]
    fn nonlinear_runs_are_reproducible_and_carry_standard_errors() {
        let settings = OdeSettings {
            system: OdeSystem::Nonlinear,
            kappas: vec![1],
            step: 0.01,
            horizon: 0.2,
            window_factor: 1,
            paths: 400,
            seed: 7,
            free_running: false,
        };
        let a = run_ode_experiment(&settings).unwrap();
        let b = run_ode_experiment(&settings).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.ref_mean.to_bits(), y.ref_mean.to_bits());
            assert_eq!(x.windowed_mean.to_bits(), y.windowed_mean.to_bits());
        }
        // The shared start is deterministic, every later step is an estimate.
        assert_eq!(a.rows[0].ref_mean_se, 0.0);
        assert!(a.rows[1].ref_mean_se > 0.0);
        assert!(a.rows[1].ref_second_se > 0.0);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(run_ode_experiment(&linear_settings(vec![], 1.0)).is_err());
        assert!(run_ode_experiment(&linear_settings(vec![1], -1.0)).is_err());
        let mut s = linear_settings(vec![1], 1.0);
        s.window_factor = 0;
        assert!(run_ode_experiment(&s).is_err());
        let mut s = linear_settings(vec![1], 1.0);
        s.step = 0.0;
        assert!(run_ode_experiment(&s).is_err());
    }
}
