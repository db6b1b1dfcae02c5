//! Builds the cost model a config describes.

use std::path::Path;

use mfg_core::bottleneck::{BottleneckModel, BottleneckSpec};
use mfg_core::route::{RoadNetwork, RouteInertiaSpec, RouteModel};
use mfg_core::{CostModel, Distribution};

use crate::config::{ConfigError, ExperimentConfig, InertiaChoice, ScenarioKind};

pub enum Model {
    Route(RouteModel),
    Bottleneck(BottleneckModel),
}

impl Model {
    pub fn build(cfg: &ExperimentConfig, scenario_path: &Path) -> Result<Self, ConfigError> {
        let bad_file = |e: mfg_core::Error| ConfigError::Field {
            field: "scenario_file".into(),
            message: format!("{}: {e}", scenario_path.display()),
        };
        let bad_model = |e: mfg_core::Error| ConfigError::Field {
            field: "theta".into(),
            message: e.to_string(),
        };
        match cfg.scenario {
            ScenarioKind::Route => {
                let net = RoadNetwork::from_path(scenario_path).map_err(bad_file)?;
                let inertia = match cfg.inertia() {
                    InertiaChoice::Overlap => RouteInertiaSpec::overlap(cfg.epsilon),
                    _ => RouteInertiaSpec::indicator(cfg.epsilon),
                };
                RouteModel::new(net, inertia, cfg.theta)
                    .map(Model::Route)
                    .map_err(bad_model)
            }
            ScenarioKind::Bottleneck => {
                let mut spec = BottleneckSpec::from_path(scenario_path).map_err(bad_file)?;
                // the experiment's epsilon wins over the scenario file's
                spec.epsilon = cfg.epsilon;
                BottleneckModel::new(spec, cfg.theta)
                    .map(Model::Bottleneck)
                    .map_err(bad_model)
            }
        }
    }

    pub fn cost(&self) -> &dyn CostModel {
        match self {
            Model::Route(m) => m,
            Model::Bottleneck(m) => m,
        }
    }

    /// Per-link flows for route scenarios.
    pub fn link_flows(&self, mu: &Distribution) -> Option<Vec<f64>> {
        match self {
            Model::Route(r) => r.network().link_flows(mu).ok(),
            Model::Bottleneck(_) => None,
        }
    }

    /// Switching cost when it has the indicator form `eps * 1{s != s'}`.
    pub fn indicator_epsilon(&self, cfg: &ExperimentConfig) -> Option<f64> {
        match (self, cfg.inertia()) {
            (Model::Route(_), InertiaChoice::Indicator) => Some(cfg.epsilon),
            _ => None,
        }
    }
}
