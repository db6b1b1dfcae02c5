//! Route choice on a single-OD network with BPR link travel times.

use std::collections::BTreeSet;
use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::math::logit;
use crate::metric::dist_distance;
use crate::model::CostModel;
use crate::types::Distribution;

/// BPR link parameters: capacity (veh/h), coefficient and free-flow time (min).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    #[serde(rename = "c")]
    pub capacity: f64,
    pub b: f64,
    pub t0: f64,
}

impl Link {
    /// `t0 (1 + b (v / c)^4)` in minutes.
    pub fn bpr_time(&self, flow: f64) -> Result<f64> {
        if flow.is_nan() || flow < 0.0 {
            return Err(Error::invalid(format!(
                "link flow must be non-negative, got {flow}"
            )));
        }
        Ok(self.t0 * (1.0 + self.b * (flow / self.capacity).powi(4)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadNetwork {
    pub links: Vec<Link>,
    /// Link indices of every path; the path index is the state.
    pub paths: Vec<Vec<usize>>,
    /// Fixed OD demand, veh/h.
    pub demand: f64,
}

impl RoadNetwork {
    pub fn new(links: Vec<Link>, paths: Vec<Vec<usize>>, demand: f64) -> Result<Self> {
        let net = Self {
            links,
            paths,
            demand,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let net: Self =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("network file: {e}")))?;
        net.validate()?;
        Ok(net)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// The nine-node, twelve-link grid with six paths and demand 2000 veh/h.
    pub fn grid9() -> Self {
        const LINKS: [(f64, f64, f64); 12] = [
            (600.0, 0.23, 15.0),
            (600.0, 0.29, 12.0),
            (600.0, 0.22, 14.0),
            (500.0, 0.18, 12.0),
            (900.0, 0.21, 14.0),
            (600.0, 0.20, 17.0),
            (500.0, 0.16, 17.0),
            (500.0, 0.24, 19.0),
            (500.0, 0.18, 11.0),
            (800.0, 0.19, 17.0),
            (700.0, 0.23, 10.0),
            (600.0, 0.16, 16.0),
        ];
        let links = LINKS
            .iter()
            .map(|&(capacity, b, t0)| Link { capacity, b, t0 })
            .collect();
        let paths = vec![
            vec![0, 1, 4, 9],
            vec![0, 3, 6, 9],
            vec![0, 3, 8, 11],
            vec![2, 7, 10, 11],
            vec![2, 5, 8, 11],
            vec![2, 5, 6, 9],
        ];
        Self::new(links, paths, 2000.0).expect("grid9 data is valid")
    }

    fn validate(&self) -> Result<()> {
        if !(self.demand > 0.0 && self.demand.is_finite()) {
            return Err(Error::invalid(format!(
                "demand must be > 0, got {}",
                self.demand
            )));
        }
        for (l, link) in self.links.iter().enumerate() {
            if !(link.capacity > 0.0 && link.capacity.is_finite()) {
                return Err(Error::invalid(format!("link {l}: capacity must be > 0")));
            }
            if !(link.b >= 0.0 && link.t0 >= 0.0) {
                return Err(Error::invalid(format!(
                    "link {l}: b and t0 must be non-negative"
                )));
            }
        }
        if self.paths.is_empty() {
            return Err(Error::invalid("network has no paths"));
        }
        for (s, path) in self.paths.iter().enumerate() {
            if path.is_empty() {
                return Err(Error::invalid(format!("path {s} is empty")));
            }
            if let Some(l) = path.iter().find(|l| **l >= self.links.len()) {
                return Err(Error::invalid(format!(
                    "path {s} references unknown link {l}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// `v(l) = demand * sum_{s : l in s} mu(s)`.
    pub fn link_flows(&self, mu: &Distribution) -> Result<Vec<f64>> {
        ensure_len("link_flows", mu.len(), self.num_paths())?;
        let mut flows = vec![0.0; self.num_links()];
        for (path, p) in self.paths.iter().zip(mu.probs()) {
            for &l in path {
                flows[l] += self.demand * p;
            }
        }
        Ok(flows)
    }

    pub fn bpr_time(&self, link: usize, flow: f64) -> Result<f64> {
        self.links
            .get(link)
            .ok_or_else(|| Error::invalid(format!("unknown link {link}")))?
            .bpr_time(flow)
    }

    /// Travel time of every path at the link flows induced by `mu`.
    pub fn path_costs(&self, mu: &Distribution) -> Result<Vec<f64>> {
        // flows from a valid distribution are non-negative, so BPR cannot fail
        let times: Vec<f64> = self
            .link_flows(mu)?
            .iter()
            .zip(&self.links)
            .map(|(v, link)| link.t0 * (1.0 + link.b * (v / link.capacity).powi(4)))
            .collect();
        Ok(self
            .paths
            .iter()
            .map(|path| path.iter().map(|&l| times[l]).sum())
            .collect())
    }

    pub fn path_cost(&self, s: usize, mu: &Distribution) -> Result<f64> {
        if s >= self.num_paths() {
            return Err(Error::invalid(format!("unknown path {s}")));
        }
        Ok(self.path_costs(mu)?[s])
    }

    /// Largest possible path travel time: every path is most expensive when
    /// it carries the whole demand.
    pub fn max_path_cost(&self) -> f64 {
        (0..self.num_paths())
            .map(|s| {
                let mu = Distribution::one_hot(self.num_paths(), s).expect("in range");
                self.path_cost(s, &mu).expect("valid path")
            })
            .fold(0.0, f64::max)
    }

    fn link_set(&self, s: usize) -> BTreeSet<usize> {
        self.paths[s].iter().copied().collect()
    }
}

pub fn link_flows(mu: &Distribution, net: &RoadNetwork) -> Result<Vec<f64>> {
    net.link_flows(mu)
}

pub fn bpr_time(link: &Link, flow: f64) -> Result<f64> {
    link.bpr_time(flow)
}

pub fn path_cost(s: usize, mu: &Distribution, net: &RoadNetwork) -> Result<f64> {
    net.path_cost(s, mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InertiaKind {
    /// `eps` for any switch.
    Indicator,
    /// `eps` times the Jaccard distance between the two paths' link sets.
    Overlap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouteInertiaSpec {
    pub kind: InertiaKind,
    pub epsilon: f64,
}

impl RouteInertiaSpec {
    pub fn indicator(epsilon: f64) -> Self {
        Self {
            kind: InertiaKind::Indicator,
            epsilon,
        }
    }

    pub fn overlap(epsilon: f64) -> Self {
        Self {
            kind: InertiaKind::Overlap,
            epsilon,
        }
    }
}

/// Route choice [`CostModel`]: BPR path travel times plus switching inertia.
#[derive(Clone, Debug)]
pub struct RouteModel {
    net: RoadNetwork,
    inertia: RouteInertiaSpec,
    theta: f64,
    switch_cost: Vec<f64>,
    bound_c: f64,
}

impl RouteModel {
    pub fn new(net: RoadNetwork, inertia: RouteInertiaSpec, theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::invalid(format!(
                "theta must be finite and > 0, got {theta}"
            )));
        }
        if !(inertia.epsilon.is_finite() && inertia.epsilon >= 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be >= 0, got {}",
                inertia.epsilon
            )));
        }
        let m = net.num_paths();
        let mut switch_cost = vec![0.0; m * m];
        for s in 0..m {
            for x in 0..m {
                if s == x {
                    continue;
                }
                switch_cost[s * m + x] = match inertia.kind {
                    InertiaKind::Indicator => inertia.epsilon,
                    InertiaKind::Overlap => {
                        let (a, b) = (net.link_set(s), net.link_set(x));
                        let shared = a.intersection(&b).count() as f64;
                        let union = a.union(&b).count() as f64;
                        inertia.epsilon * (1.0 - shared / union)
                    }
                };
            }
        }
        let bound_c = net.max_path_cost() + inertia.epsilon;
        Ok(Self {
            net,
            inertia,
            theta,
            switch_cost,
            bound_c,
        })
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn inertia_spec(&self) -> RouteInertiaSpec {
        self.inertia
    }
}

impl CostModel for RouteModel {
    fn num_states(&self) -> usize {
        self.net.num_paths()
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        self.net
            .path_cost(s, mu)
            .expect("route model: invalid path or distribution")
    }

    fn travel_costs(&self, mu: &Distribution) -> Vec<f64> {
        self.net
            .path_costs(mu)
            .expect("route model: distribution has the wrong length")
    }

    fn inertia(&self, s: usize, next: usize) -> f64 {
        self.switch_cost[s * self.net.num_paths() + next]
    }

    fn bound_c(&self) -> f64 {
        self.bound_c
    }
}

/// Stopping threshold on `max_s |mu(s) - logit(mu)(s)|`.
pub const SUE_TOL: f64 = 1e-10;
const SUE_MAX_ITERS: usize = 100_000;

impl RoadNetwork {
    /// Beckmann-type potential whose minimizer over the simplex, once the
    /// entropy term is added, is the logit SUE. Scaled per unit of demand.
    fn link_potential(&self, mu: &Distribution) -> Result<f64> {
        let flows = self.link_flows(mu)?;
        Ok(flows
            .iter()
            .zip(&self.links)
            .map(|(v, l)| l.t0 * (v + l.b * v.powi(5) / (5.0 * l.capacity.powi(4))))
            .sum::<f64>()
            / self.demand)
    }

    /// Jacobian `df(s)/dmu(x) = demand * sum_{l in s and x} t_l'(v_l)`.
    fn cost_jacobian(&self, mu: &Distribution) -> Result<Vec<f64>> {
        let flows = self.link_flows(mu)?;
        let slopes: Vec<f64> = flows
            .iter()
            .zip(&self.links)
            .map(|(v, l)| 4.0 * l.t0 * l.b * v.powi(3) / l.capacity.powi(4))
            .collect();
        let m = self.num_paths();
        let mut jac = vec![0.0; m * m];
        for s in 0..m {
            for x in 0..m {
                jac[s * m + x] = self.demand
                    * self.paths[s]
                        .iter()
                        .filter(|l| self.paths[x].contains(l))
                        .map(|&l| slopes[l])
                        .sum::<f64>();
            }
        }
        Ok(jac)
    }
}

fn sue_objective(net: &RoadNetwork, mu: &Distribution, theta: f64) -> Result<f64> {
    let entropy: f64 = mu
        .probs()
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum();
    Ok(net.link_potential(mu)? + entropy / theta)
}

fn sue_residual(net: &RoadNetwork, mu: &Distribution, theta: f64) -> Result<f64> {
    let target = Distribution::new(logit(&net.path_costs(mu)?, theta))?;
    dist_distance(mu, &target)
}

/// Logit stochastic user equilibrium: the fixed point of
/// `mu = softmax(-theta f(., mu))`.
///
/// Solved as the strictly convex program `min potential(mu) + sum mu ln mu / theta`
/// over the simplex with equality-constrained Newton steps, a
/// fraction-to-boundary rule keeping `mu > 0`, and backtracking.
pub fn logit_sue(net: &RoadNetwork, theta: f64) -> Result<Distribution> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid(format!(
            "theta must be finite and > 0, got {theta}"
        )));
    }
    let m = net.num_paths();
    let mut mu = Distribution::uniform(m);
    let mut residual = sue_residual(net, &mu, theta)?;
    let mut objective = sue_objective(net, &mu, theta)?;
    for iter in 0..SUE_MAX_ITERS {
        if residual <= SUE_TOL {
            debug!("logit SUE converged after {iter} Newton steps");
            return Ok(mu);
        }
        let step = sue_newton_direction(net, &mu, theta)?;
        // largest step keeping every entry positive
        let mut t = step
            .iter()
            .zip(mu.probs())
            .filter(|(d, _)| **d < 0.0)
            .map(|(d, p)| -0.99 * p / d)
            .fold(1.0f64, f64::min);
        let mut accepted = false;
        for _ in 0..60 {
            let probs: Vec<f64> = mu
                .probs()
                .iter()
                .zip(&step)
                .map(|(p, d)| p + t * d)
                .collect();
            if let Ok(cand) = Distribution::from_weights(probs) {
                let obj = sue_objective(net, &cand, theta)?;
                let res = sue_residual(net, &cand, theta)?;
                if obj < objective || res < residual {
                    mu = cand;
                    objective = obj;
                    residual = res;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::SolverFailure {
        solver: "logit_sue",
        iterations: SUE_MAX_ITERS,
        residuals: vec![residual],
    })
}

/// Solves `[H 1; 1' 0] [d; -nu] = [-g; 0]` for the Newton direction `d`, with
/// `H = df/dmu + diag(1 / (theta mu))` and `g = f + (ln mu + 1) / theta`.
fn sue_newton_direction(net: &RoadNetwork, mu: &Distribution, theta: f64) -> Result<Vec<f64>> {
    let m = net.num_paths();
    let costs = net.path_costs(mu)?;
    let jac = net.cost_jacobian(mu)?;
    let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    for s in 0..m {
        for x in 0..m {
            kkt[(s, x)] = jac[s * m + x];
        }
        kkt[(s, s)] += 1.0 / (theta * mu[s]);
        kkt[(s, m)] = 1.0;
        kkt[(m, s)] = 1.0;
        rhs[s] = -(costs[s] + (mu[s].ln() + 1.0) / theta);
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric("logit_sue: singular Newton system"))?;
    Ok(sol.iter().take(m).copied().collect())
}
