//! Shared fixtures for the criterion benches.

use mfg_core::bottleneck::{BottleneckModel, BottleneckSpec};
use mfg_core::route::{RoadNetwork, RouteInertiaSpec, RouteModel};
use mfg_core::Distribution;

pub fn route(epsilon: f64, theta: f64) -> RouteModel {
    RouteModel::new(
        RoadNetwork::grid9(),
        RouteInertiaSpec::indicator(epsilon),
        theta,
    )
    .expect("built-in network is valid")
}

pub fn bottleneck(epsilon: f64, theta: f64) -> BottleneckModel {
    BottleneckModel::new(
        BottleneckSpec {
            epsilon,
            ..BottleneckSpec::standard()
        },
        theta,
    )
    .expect("standard spec is valid")
}

/// Route start used throughout the experiments: half the commuters on path 2.
pub fn route_mu0() -> Distribution {
    Distribution::new(vec![0.1, 0.1, 0.5, 0.1, 0.1, 0.1]).expect("sums to one")
}
