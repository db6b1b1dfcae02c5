//! Departure-time choice through a single point-queue bottleneck.
//!
//! The departure window `[0, L]` hours is cut into `M` slices. Commuters
//! leaving in slice `s` queue behind everyone who left earlier; the queue is
//! served at the normalized capacity `C_b = (C*/demand)(L/M)` per slice.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::model::CostModel;
use crate::types::Distribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BottleneckSpec {
    /// Number of departure slices.
    #[serde(rename = "M")]
    pub slices: usize,
    /// Window length, hours.
    #[serde(rename = "L")]
    pub window: f64,
    /// Bottleneck capacity, vehicles per hour.
    pub capacity: f64,
    /// Number of commuters.
    pub demand: f64,
    /// Cost per hour of queueing delay.
    pub alpha: f64,
    /// Cost per hour of early arrival.
    pub beta: f64,
    /// Cost per hour of late arrival.
    pub gamma: f64,
    /// Desired arrival time, hours from the window start.
    pub r: f64,
    /// Inertia per hour of departure shift.
    pub epsilon: f64,
    /// Map slice `s` to the time of its midpoint rather than its left edge.
    #[serde(default)]
    pub slice_center: bool,
}

impl BottleneckSpec {
    pub fn validate(&self) -> Result<()> {
        if self.slices == 0 {
            return Err(Error::invalid("bottleneck: M must be at least 1"));
        }
        for (name, v) in [
            ("L", self.window),
            ("capacity", self.capacity),
            ("demand", self.demand),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "bottleneck: {name} must be > 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "bottleneck: {name} must be >= 0, got {v}"
                )));
            }
        }
        if !(0.0..=self.window).contains(&self.r) {
            return Err(Error::invalid(format!(
                "bottleneck: desired arrival r = {} lies outside [0, {}]",
                self.r, self.window
            )));
        }
        if !(self.beta < self.alpha && self.alpha < self.gamma) {
            warn!(
                "bottleneck: unusual cost ordering (beta {}, alpha {}, gamma {}); expected beta < alpha < gamma",
                self.beta, self.alpha, self.gamma
            );
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("bottleneck file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// 6000 commuters, 3000 veh/h, a three-hour window in 40 slices, desired
    /// arrival at 2 h, and cost rates 10 / 5 / 15.
    pub fn standard() -> Self {
        Self {
            slices: 40,
            window: 3.0,
            capacity: 3000.0,
            demand: 6000.0,
            alpha: 10.0,
            beta: 5.0,
            gamma: 15.0,
            r: 2.0,
            epsilon: 1.0,
            slice_center: false,
        }
    }

    /// Slice length in hours.
    pub fn slice_hours(&self) -> f64 {
        self.window / self.slices as f64
    }

    /// Share of the population the bottleneck serves per slice.
    pub fn normalized_capacity(&self) -> f64 {
        self.capacity / self.demand * self.slice_hours()
    }

    pub fn departure_hours(&self, s: usize) -> f64 {
        let offset = if self.slice_center { 0.5 } else { 0.0 };
        (s as f64 + offset) * self.slice_hours()
    }

    /// Queueing delay (hours) seen by the last commuter departing in each slice.
    ///
    /// In slice units the delay is `B(s) - min(1, min_{y <= s} B(y))` with
    /// `B(y) = sum_{x <= y} mu(x) / C_b - y`; the constant 1 is `B(-1)`, the
    /// empty system before the window opens.
    pub fn delays(&self, mu: &Distribution) -> Result<Vec<f64>> {
        ensure_len("bottleneck delay", mu.len(), self.slices)?;
        let cb = self.normalized_capacity();
        let mut cumulative = 0.0;
        let mut running_min = 1.0f64;
        let mut out = Vec::with_capacity(self.slices);
        for (s, p) in mu.probs().iter().enumerate() {
            cumulative += p / cb;
            let b = cumulative - s as f64;
            running_min = running_min.min(b);
            out.push((b - running_min).max(0.0) * self.slice_hours());
        }
        Ok(out)
    }

    /// Scheduling cost for departing in slice `s` with delay `delay` hours.
    pub fn schedule_cost(&self, s: usize, delay: f64) -> f64 {
        let arrival = self.departure_hours(s) + delay;
        self.alpha * delay
            + self.beta * (self.r - arrival).max(0.0)
            + self.gamma * (arrival - self.r).max(0.0)
    }

    pub fn costs(&self, mu: &Distribution) -> Result<Vec<f64>> {
        Ok(self
            .delays(mu)?
            .into_iter()
            .enumerate()
            .map(|(s, t)| self.schedule_cost(s, t))
            .collect())
    }

    pub fn shift_inertia(&self, s: usize, next: usize) -> f64 {
        self.epsilon * s.abs_diff(next) as f64 * self.slice_hours()
    }
}

fn check_slice(s: usize, spec: &BottleneckSpec) -> Result<()> {
    if s >= spec.slices {
        return Err(Error::invalid(format!(
            "slice {s} out of range for M = {}",
            spec.slices
        )));
    }
    Ok(())
}

pub fn bottleneck_delay(s: usize, mu: &Distribution, spec: &BottleneckSpec) -> Result<f64> {
    check_slice(s, spec)?;
    Ok(spec.delays(mu)?[s])
}

pub fn departure_cost(s: usize, mu: &Distribution, spec: &BottleneckSpec) -> Result<f64> {
    let t = bottleneck_delay(s, mu, spec)?;
    Ok(spec.schedule_cost(s, t))
}

pub fn shift_inertia(s: usize, next: usize, spec: &BottleneckSpec) -> Result<f64> {
    check_slice(s, spec)?;
    check_slice(next, spec)?;
    Ok(spec.shift_inertia(s, next))
}

/// Departure-time [`CostModel`].
#[derive(Clone, Debug)]
pub struct BottleneckModel {
    spec: BottleneckSpec,
    theta: f64,
    bound_c: f64,
}

impl BottleneckModel {
    pub fn new(spec: BottleneckSpec, theta: f64) -> Result<Self> {
        spec.validate()?;
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::invalid(format!(
                "theta must be finite and > 0, got {theta}"
            )));
        }
        let m = spec.slices;
        let mut worst = 0.0f64;
        for k in 0..m {
            let mu = Distribution::one_hot(m, k)?;
            worst = spec.costs(&mu)?.into_iter().fold(worst, f64::max);
        }
        let bound_c = worst + spec.shift_inertia(0, m - 1);
        Ok(Self {
            spec,
            theta,
            bound_c,
        })
    }

    pub fn spec(&self) -> &BottleneckSpec {
        &self.spec
    }
}

impl CostModel for BottleneckModel {
    fn num_states(&self) -> usize {
        self.spec.slices
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        departure_cost(s, mu, &self.spec).expect("bottleneck model: invalid slice or distribution")
    }

    fn travel_costs(&self, mu: &Distribution) -> Vec<f64> {
        self.spec
            .costs(mu)
            .expect("bottleneck model: distribution has the wrong length")
    }

    fn inertia(&self, s: usize, next: usize) -> f64 {
        self.spec.shift_inertia(s, next)
    }

    fn bound_c(&self) -> f64 {
        self.bound_c
    }
}
