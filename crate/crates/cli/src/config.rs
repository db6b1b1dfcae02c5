//! Experiment configuration files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Route,
    Bottleneck,
}

/// Form of the switching cost. Route scenarios take `indicator` or
/// `overlap`; the bottleneck only supports `linear` (cost per hour shifted).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InertiaChoice {
    Indicator,
    Overlap,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mu0 {
    Explicit(Vec<f64>),
    /// Only `"uniform"` is accepted.
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPolicy {
    Uniform,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub exploitability_tol: f64,
    pub record_trace: bool,
    pub initial_policy: InitialPolicy,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            exploitability_tol: 1e-6,
            record_trace: true,
            initial_policy: InitialPolicy::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    /// Relative paths are resolved against the config file's directory.
    pub scenario_file: PathBuf,
    pub horizon: usize,
    pub theta: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_kind: Option<InertiaChoice>,
    pub mu0: Mu0,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Output directory, relative to the working directory.
    pub outputs: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Days whose policy is written out; defaults to the first and last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_days: Option<Vec<usize>>,
    /// Random restarts of the stationary solver used as a uniqueness probe.
    #[serde(default)]
    pub smfe_restarts: usize,
}

#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Parse or validation failure; `field` is a dotted path into the file.
    Field { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read {}: {source}", path.display())
            }
            ConfigError::Field { field, message } => write!(f, "config field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            field_error(&field, e.into_inner().to_string())
        })?;
        cfg.check_fields()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Checks that do not need the scenario file.
    fn check_fields(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(field_error("horizon", "must be at least 1"));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(field_error(
                "theta",
                format!("must be finite and > 0, got {}", self.theta),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(field_error(
                "epsilon",
                format!("must be finite and >= 0, got {}", self.epsilon),
            ));
        }
        if self.solver.max_iters == 0 {
            return Err(field_error("solver.max_iters", "must be at least 1"));
        }
        if self.solver.exploitability_tol.is_nan() || self.solver.exploitability_tol <= 0.0 {
            return Err(field_error("solver.exploitability_tol", "must be > 0"));
        }
        if let Mu0::Named(name) = &self.mu0 {
            if name != "uniform" {
                return Err(field_error(
                    "mu0",
                    format!("expected a vector or \"uniform\", got \"{name}\""),
                ));
            }
        }
        if let Some(days) = &self.policy_days {
            if let Some(d) = days.iter().find(|d| **d >= self.horizon) {
                return Err(field_error(
                    "policy_days",
                    format!("day {d} is outside 0..{}", self.horizon),
                ));
            }
        }
        match (self.scenario, self.inertia_kind) {
            (ScenarioKind::Route, Some(InertiaChoice::Linear)) => Err(field_error(
                "inertia_kind",
                "route scenarios take \"indicator\" or \"overlap\"",
            )),
            (ScenarioKind::Bottleneck, Some(k)) if k != InertiaChoice::Linear => Err(field_error(
                "inertia_kind",
                "the bottleneck scenario only supports \"linear\"",
            )),
            _ => Ok(()),
        }
    }

    /// Effective inertia form.
    pub fn inertia(&self) -> InertiaChoice {
        self.inertia_kind.unwrap_or(match self.scenario {
            ScenarioKind::Route => InertiaChoice::Indicator,
            ScenarioKind::Bottleneck => InertiaChoice::Linear,
        })
    }

    pub fn policy_days(&self) -> Vec<usize> {
        match &self.policy_days {
            Some(days) => days.clone(),
            None if self.horizon == 1 => vec![0],
            None => vec![0, self.horizon - 1],
        }
    }

    /// `mu0` checked against the scenario's number of states.
    pub fn initial_distribution(&self, m: usize) -> Result<mfg_core::Distribution, ConfigError> {
        match &self.mu0 {
            Mu0::Named(_) => Ok(mfg_core::Distribution::uniform(m)),
            Mu0::Explicit(v) => {
                if v.len() != m {
                    return Err(field_error(
                        "mu0",
                        format!("has {} entries but the scenario has {m} states", v.len()),
                    ));
                }
                mfg_core::Distribution::new(v.clone())
                    .map_err(|e| field_error("mu0", e.to_string()))
            }
        }
    }
}

/// Resolves `scenario_file` relative to the directory holding the config.
pub fn resolve_scenario(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    if cfg.scenario_file.is_absolute() {
        cfg.scenario_file.clone()
    } else {
        config_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&cfg.scenario_file)
    }
}
