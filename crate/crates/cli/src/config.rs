//! Run configuration: JSON on disk, every key optional, unknown keys rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Radial box `[0, r_max]` with `r_max = r_max_over_inv_alpha / α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub r_max_over_inv_alpha: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { r_max_over_inv_alpha: 30.0, n: 600 }
    }
}

impl GridConfig {
    pub fn r_max(&self, alpha: f64) -> f64 {
        self.r_max_over_inv_alpha / alpha
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Newton update tolerance relative to `max|u|`
    pub newton_tol: f64,
    /// zero threshold of the root-space singular values, in units of `α^{2k}`
    pub eig_tol: f64,
    /// time step of the linear and shooting integrators, in units of `1/α²`
    pub ode_dt: f64,
    /// time step of the soliton-fidelity run, in units of `1/α²`
    pub nls_dt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { newton_tol: 512.0 * f64::EPSILON, eig_tol: 1e-4, ode_dt: 1e-3, nls_dt: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    /// perturbation amplitudes in units of `‖φ‖₂`, ascending
    pub epsilon_list: Vec<f64>,
    /// shooting horizon; absent means `max(10/σ, 30/α²)`
    pub t_run: Option<f64>,
    /// exit threshold on `|b⁺|` in units of `‖φ‖₂`
    pub exit_threshold: f64,
    pub ell_max: usize,
    pub seed: u64,
    /// random probes of the stability experiment
    pub probes: usize,
    /// horizon of the soliton-fidelity run, in units of `1/α²`
    pub nls_horizon: f64,
    /// width of the local-decay probe, in units of `1/α`
    pub decay_width: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            epsilon_list: vec![0.001, 0.003, 0.01],
            t_run: None,
            exit_threshold: 0.2,
            ell_max: 3,
            seed: 7,
            probes: 5,
            nls_horizon: 20.0,
            decay_width: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub alpha0: f64,
    /// grid of the ground state, spectra and dynamics; spectral claims are
    /// repeated at `2n`
    pub grid: GridConfig,
    /// large box of the local-decay experiment
    pub decay_grid: GridConfig,
    pub tolerances: Tolerances,
    pub experiment: Experiment,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            grid: GridConfig::default(),
            decay_grid: GridConfig { r_max_over_inv_alpha: 400.0, n: 13332 },
            tolerances: Tolerances::default(),
            experiment: Experiment::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return bad(format!("alpha0 must be positive, got {}", self.alpha0));
        }
        for (name, g) in [("grid", &self.grid), ("decay_grid", &self.decay_grid)] {
            if !(g.r_max_over_inv_alpha.is_finite() && g.r_max_over_inv_alpha > 0.0) {
                return bad(format!("{name}.r_max_over_inv_alpha must be positive"));
            }
            if g.n < 64 {
                return bad(format!("{name}.n must be at least 64, got {}", g.n));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [("newton_tol", t.newton_tol), ("eig_tol", t.eig_tol), ("ode_dt", t.ode_dt), ("nls_dt", t.nls_dt)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("tolerances.{name} must be positive, got {v}"));
            }
        }
        let e = &self.experiment;
        if e.epsilon_list.is_empty() || e.epsilon_list.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return bad("experiment.epsilon_list must hold positive amplitudes".into());
        }
        if e.epsilon_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("experiment.epsilon_list must be sorted ascending".into());
        }
        if let Some(t) = e.t_run {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("experiment.t_run must be positive, got {t}"));
            }
        }
        if !(e.exit_threshold > 0.0 && e.exit_threshold < 1.0) {
            return bad(format!("experiment.exit_threshold must lie in (0, 1), got {}", e.exit_threshold));
        }
        if e.ell_max < 2 {
            return bad(format!("experiment.ell_max must be at least 2, got {}", e.ell_max));
        }
        if e.probes == 0 {
            return bad("experiment.probes must be at least 1".into());
        }
        if !(e.nls_horizon > 0.0 && e.decay_width > 0.0) {
            return bad("experiment.nls_horizon and decay_width must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    RunConfig::from_json(&text)
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<(), ConfigError> {
    fs::write(path, cfg.to_json() + "\n").map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}
