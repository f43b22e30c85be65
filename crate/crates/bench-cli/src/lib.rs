//! Benchmark and experiment runner for the `polychaos` surrogate library.
//!
//! Four config-driven experiments produce CSV tables (plotting is left to
//! downstream tools):
//!
//! * [`sweep`] — moment-error sweeps `|E[f^m] - E[f̂^m]|`, `m = 1..4`, across
//!   candidate functions, approximation orders, and solver methods;
//! * [`ode`] — moment tracking for parametric scalar ODEs: the spectral
//!   surrogate propagator against the windowed linear propagator, measured
//!   against an analytic or Monte Carlo reference;
//! * [`window`] — terminal-error study of the fit-window length;
//! * [`selftest`] — invariant suites with a machine-readable JSON summary.
//!
//! [`config`] merges a TOML file, command-line flags, and the output
//! directory environment variable; [`functions`] registers the candidate
//! test functions; [`output`] fixes the CSV format so identical configs and
//! seeds reproduce identical bytes.

pub mod config;
pub mod functions;
pub mod ode;
pub mod output;
pub mod selftest;
pub mod sweep;
pub mod window;
