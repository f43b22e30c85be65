//! Experiment configuration: TOML file, flag overrides, environment.
//!
//! Settings are merged from three layers, strongest first:
//!
//! 1. command-line flags,
//! 2. the [`OUT_DIR_ENV`] environment variable (output directory only),
//! 3. the TOML config file,
//!
//! with built-in defaults underneath. The file's `experiment` id can also
//! select a preset: the three `fig-` ids are sweep presets that pin the
//! method list, and the two `ode-` ids pick the benchmark system.
//!
//! ```toml
//! experiment = "sweep"
//! seed = 42
//! out_dir = "results"
//!
//! [sweep]
//! kappas = [1, 2, 3]
//! functions = ["delta8", "rational"]
//! methods = ["gp", "constrained-gp"]
//!
//! [custom]
//! coefficients = [0.0, 1.0, 0.5]   # used by function id "custom"
//!
//! [ode]
//! kappas = [1, 2, 3]
//! step = 0.01
//! horizon = 10.0
//! window_factor = 1
//! paths = 100000
//! free_running = false
//!
//! [window]
//! kappa = 1
//! factors = [1, 5, 10]
//! step = 0.01
//! horizon = 10.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use polychaos::{Error, Result};
use serde::Deserialize;

use crate::functions::Candidate;
use crate::ode::{OdeSettings, OdeSystem, DEFAULT_HORIZON, DEFAULT_PATHS, DEFAULT_STEP};
use crate::sweep::{Method, SweepSettings};
use crate::window::{WindowSettings, DEFAULT_FACTORS};

/// Environment variable overriding the output directory (flags still win).
pub const OUT_DIR_ENV: &str = "PCBENCH_OUT_DIR";

/// Output directory when neither flag, environment, nor file set one.
pub const DEFAULT_OUT_DIR: &str = "results";

/// Seed when neither flag nor file set one.
pub const DEFAULT_SEED: u64 = 42;

/// Experiment identifiers accepted in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    /// Moment-error sweep over every method.
    Sweep,
    /// Sweep preset: the three unconstrained methods (gp, sc, ls).
    FigPcErrors,
    /// Sweep preset: the moment-constrained projection only.
    FigConGpc,
    /// Sweep preset: the moment-constrained least squares only.
    FigConSc,
    /// Tracking experiment on the linear decay system.
    OdeLinear,
    /// Tracking experiment on the nonlinear system.
    OdeNonlinear,
    /// Window-length study.
    WindowSweep,
    /// Invariant suites.
    Selftest,
}

impl ExperimentId {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "sweep" => Ok(Self::Sweep),
            "fig-pcerrors" => Ok(Self::FigPcErrors),
            "fig-conGPC" => Ok(Self::FigConGpc),
            "fig-conSC" => Ok(Self::FigConSc),
            "ode-linear" => Ok(Self::OdeLinear),
            "ode-nonlinear" => Ok(Self::OdeNonlinear),
            "window-sweep" => Ok(Self::WindowSweep),
            "selftest" => Ok(Self::Selftest),
            other => Err(Error::InvalidConfig(format!(
                "unknown experiment id `{other}` (expected one of sweep, fig-pcerrors, \
                 fig-conGPC, fig-conSC, ode-linear, ode-nonlinear, window-sweep, selftest)"
            ))),
        }
    }

    /// Default method list implied by the id (sweep presets).
    fn preset_methods(self) -> Vec<Method> {
        match self {
            Self::FigPcErrors => vec![Method::Gp, Method::Sc, Method::Ls],
            Self::FigConGpc => vec![Method::ConstrainedGp],
            Self::FigConSc => vec![Method::ConstrainedLs],
            _ => Method::ALL.to_vec(),
        }
    }

    /// System implied by the id, when it names one.
    fn preset_system(self) -> Option<OdeSystem> {
        match self {
            Self::OdeLinear => Some(OdeSystem::Linear),
            Self::OdeNonlinear => Some(OdeSystem::Nonlinear),
            _ => None,
        }
    }
}

/// Values taken from command-line flags; `None` falls through to the next
/// layer.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kappas: Option<Vec<usize>>,
    pub function: Option<String>,
    pub method: Option<String>,
    pub system: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    experiment: Option<String>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    sweep: SweepSection,
    custom: CustomSection,
    ode: OdeSection,
    window: WindowSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    kappas: Option<Vec<usize>>,
    functions: Option<Vec<String>>,
    methods: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CustomSection {
    coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OdeSection {
    kappas: Option<Vec<usize>>,
    step: Option<f64>,
    horizon: Option<f64>,
    window_factor: Option<usize>,
    paths: Option<usize>,
    free_running: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WindowSection {
    kappa: Option<usize>,
    factors: Option<Vec<usize>>,
    step: Option<f64>,
    horizon: Option<f64>,
}

/// Fully merged configuration; the experiment-specific settings are built on
/// demand so each subcommand validates only what it uses.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    experiment: ExperimentId,
    seed: u64,
    out_dir: PathBuf,
    file: FileConfig,
    overrides: Overrides,
}

/// Loads and merges configuration. `env_out` carries the value of
/// [`OUT_DIR_ENV`] so callers without process-environment access (tests) can
/// inject it.
pub fn load(
    path: Option<&Path>,
    overrides: Overrides,
    env_out: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let file: FileConfig = match path {
        Some(p) => {
            let body = fs::read_to_string(p).map_err(|e| Error::MalformedFile {
                path: p.display().to_string(),
                reason: e.to_string(),
            })?;
            toml::from_str(&body).map_err(|e| Error::MalformedFile {
                path: p.display().to_string(),
                reason: e.to_string(),
            })?
        }
        None => FileConfig::default(),
    };
    let experiment = match &file.experiment {
        Some(id) => ExperimentId::from_id(id)?,
        None => ExperimentId::Sweep,
    };
    let seed = overrides.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out_dir = overrides
        .out
        .clone()
        .or(env_out)
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(ExperimentConfig {
        experiment,
        seed,
        out_dir,
        file,
        overrides,
    })
}

impl ExperimentConfig {
    pub fn experiment(&self) -> ExperimentId {
        self.experiment
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    fn candidate(&self, id: &str) -> Result<Candidate> {
        Candidate::from_id(id, self.file.custom.coefficients.as_deref())
    }

    /// Sweep settings: a `--function`/`--method` flag narrows to one
    /// candidate or method; an explicit `[sweep]` list beats the experiment
    /// preset.
    pub fn sweep_settings(&self) -> Result<SweepSettings> {
        let kappas = self
            .overrides
            .kappas
            .clone()
            .or_else(|| self.file.sweep.kappas.clone())
            .unwrap_or_else(|| (1..=10).collect());

        let functions = match (&self.overrides.function, &self.file.sweep.functions) {
            (Some(id), _) => vec![self.candidate(id)?],
            (None, Some(ids)) => ids
                .iter()
                .map(|id| self.candidate(id))
                .collect::<Result<Vec<_>>>()?,
            (None, None) => Candidate::standard_set(),
        };

        let methods = match (&self.overrides.method, &self.file.sweep.methods) {
            (Some(id), _) => vec![Method::from_id(id)?],
            (None, Some(ids)) => ids
                .iter()
                .map(|id| Method::from_id(id))
                .collect::<Result<Vec<_>>>()?,
            (None, None) => self.experiment.preset_methods(),
        };

        Ok(SweepSettings {
            functions,
            kappas,
            methods,
            seed: self.seed,
        })
    }

    /// Tracking settings: `--system` wins, then an `ode-*` experiment id,
    /// then the linear default.
    pub fn ode_settings(&self) -> Result<OdeSettings> {
        let system = match &self.overrides.system {
            Some(id) => OdeSystem::from_id(id)?,
            None => self
                .experiment
                .preset_system()
                .unwrap_or(OdeSystem::Linear),
        };
        Ok(OdeSettings {
            system,
            kappas: self
                .overrides
                .kappas
                .clone()
                .or_else(|| self.file.ode.kappas.clone())
                .unwrap_or_else(|| vec![1, 2, 3]),
            step: self.file.ode.step.unwrap_or(DEFAULT_STEP),
            horizon: self.file.ode.horizon.unwrap_or(DEFAULT_HORIZON),
            window_factor: self.file.ode.window_factor.unwrap_or(1),
            paths: self.file.ode.paths.unwrap_or(DEFAULT_PATHS),
            seed: self.seed,
            free_running: self.file.ode.free_running.unwrap_or(false),
        })
    }

    /// Window-study settings; `--kappa` must then name a single order.
    pub fn window_settings(&self) -> Result<WindowSettings> {
        let kappa = match &self.overrides.kappas {
            Some(list) if list.len() == 1 => list[0],
            Some(list) => {
                return Err(Error::InvalidConfig(format!(
                    "the window study runs at a single order, got --kappa with {} values",
                    list.len()
                )))
            }
            None => self.file.window.kappa.unwrap_or(1),
        };
        Ok(WindowSettings {
            kappa,
            factors: self
                .file
                .window
                .factors
                .clone()
                .unwrap_or_else(|| DEFAULT_FACTORS.to_vec()),
            step: self.file.window.step.unwrap_or(DEFAULT_STEP),
            horizon: self.file.window.horizon.unwrap_or(DEFAULT_HORIZON),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.toml");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn defaults_apply_without_a_file() {
        let cfg = load(None, Overrides::default(), None).unwrap();
        assert_eq!(cfg.seed(), DEFAULT_SEED);
        assert_eq!(cfg.out_dir(), Path::new(DEFAULT_OUT_DIR));
        let sweep = cfg.sweep_settings().unwrap();
        assert_eq!(sweep.kappas, (1..=10).collect::<Vec<_>>());
        assert_eq!(sweep.functions.len(), 4);
        assert_eq!(sweep.methods.len(), 5);
        let ode = cfg.ode_settings().unwrap();
        assert_eq!(ode.system, OdeSystem::Linear);
        assert_eq!(ode.kappas, vec![1, 2, 3]);
        assert_eq!(ode.paths, DEFAULT_PATHS);
    }

    #[test]
    fn file_values_are_read_and_flags_win() {
        let (_dir, path) = write_config(
            r#"
experiment = "fig-conGPC"
seed = 7
out_dir = "from-file"

[sweep]
kappas = [2, 4]
"#,
        );
        let cfg = load(Some(&path), Overrides::default(), None).unwrap();
        assert_eq!(cfg.seed(), 7);
        assert_eq!(cfg.out_dir(), Path::new("from-file"));
        let sweep = cfg.sweep_settings().unwrap();
        assert_eq!(sweep.kappas, vec![2, 4]);
        assert_eq!(sweep.methods, vec![Method::ConstrainedGp]);

        let over = Overrides {
            seed: Some(9),
            kappas: Some(vec![1]),
            method: Some("gp".into()),
            ..Overrides::default()
        };
        let cfg = load(Some(&path), over, None).unwrap();
        assert_eq!(cfg.seed(), 9);
        let sweep = cfg.sweep_settings().unwrap();
        assert_eq!(sweep.kappas, vec![1]);
        assert_eq!(sweep.methods, vec![Method::Gp]);
    }

    #[test]
    fn out_dir_precedence_is_flag_env_file() {
        let (_dir, path) = write_config("out_dir = \"from-file\"\n");
        let cfg = load(Some(&path), Overrides::default(), Some("from-env".into())).unwrap();
        assert_eq!(cfg.out_dir(), Path::new("from-env"));
        let over = Overrides {
            out: Some("from-flag".into()),
            ..Overrides::default()
        };
        let cfg = load(Some(&path), over, Some("from-env".into())).unwrap();
        assert_eq!(cfg.out_dir(), Path::new("from-flag"));
    }

    #[test]
    fn ode_system_resolution_follows_the_precedence() {
        let (_dir, path) = write_config("experiment = \"ode-nonlinear\"\n");
        let cfg = load(Some(&path), Overrides::default(), None).unwrap();
        assert_eq!(cfg.ode_settings().unwrap().system, OdeSystem::Nonlinear);
        let over = Overrides {
            system: Some("linear".into()),
            ..Overrides::default()
        };
        let cfg = load(Some(&path), over, None).unwrap();
        assert_eq!(cfg.ode_settings().unwrap().system, OdeSystem::Linear);
    }

    #[test]
    fn custom_function_pulls_coefficients_from_the_file() {
        let (_dir, path) = write_config(
            r#"
[custom]
coefficients = [1.0, 0.0, 2.0]
"#,
        );
        let over = Overrides {
            function: Some("custom".into()),
            ..Overrides::default()
        };
        let cfg = load(Some(&path), over, None).unwrap();
        let sweep = cfg.sweep_settings().unwrap();
        assert_eq!(sweep.functions, vec![Candidate::Custom(vec![1.0, 0.0, 2.0])]);
    }

    #[test]
    fn malformed_files_and_unknown_ids_are_rejected() {
        let (_dir, path) = write_config("experiment = \"warp\"\n");
        assert!(load(Some(&path), Overrides::default(), None).is_err());
        let (_dir, path) = write_config("kappa_min = 1\n");
        let err = load(Some(&path), Overrides::default(), None).unwrap_err();
        assert!(matches!(err, Error::MalformedFile { .. }), "{err}");
        assert!(load(Some(Path::new("/nonexistent/bench.toml")), Overrides::default(), None).is_err());
    }

    #[test]
    fn window_kappa_flag_must_be_single() {
        let over = Overrides {
            kappas: Some(vec![1, 2]),
            ..Overrides::default()
        };
        let cfg = load(None, over, None).unwrap();
        assert!(cfg.window_settings().is_err());
        let over = Overrides {
            kappas: Some(vec![2]),
            ..Overrides::default()
        };
        let cfg = load(None, over, None).unwrap();
        assert_eq!(cfg.window_settings().unwrap().kappa, 2);
    }
}
