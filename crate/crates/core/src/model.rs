//! The scenario interface consumed by every solver.

use crate::error::{Error, Result};
use crate::types::Distribution;

/// Daily cost structure of a travel-choice scenario.
///
/// A commuter on choice `s` who picks `s'` for tomorrow pays
/// `f(s, mu) + d(s, s') + ln(pi(s'|s)) / theta` today, where `f` is
/// [`travel_cost`](CostModel::travel_cost) and `d` is
/// [`inertia`](CostModel::inertia). Implementations must be deterministic and
/// keep `0 <= f, d <= bound_c()`.
pub trait CostModel: Sync {
    fn num_states(&self) -> usize;

    /// Inverse perception-noise scale; finite and positive.
    fn theta(&self) -> f64;

    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64;

    /// `f(s, mu)` for every state. Scenarios that share work across states
    /// (link flows, cumulative queues) override this.
    fn travel_costs(&self, mu: &Distribution) -> Vec<f64> {
        (0..self.num_states())
            .map(|s| self.travel_cost(s, mu))
            .collect()
    }

    fn inertia(&self, s: usize, next: usize) -> f64;

    /// Uniform bound `C` on travel cost and inertia.
    fn bound_c(&self) -> f64;
}

impl<T: CostModel + ?Sized> CostModel for &T {
    fn num_states(&self) -> usize {
        (**self).num_states()
    }
    fn theta(&self) -> f64 {
        (**self).theta()
    }
    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        (**self).travel_cost(s, mu)
    }
    fn travel_costs(&self, mu: &Distribution) -> Vec<f64> {
        (**self).travel_costs(mu)
    }
    fn inertia(&self, s: usize, next: usize) -> f64 {
        (**self).inertia(s, next)
    }
    fn bound_c(&self) -> f64 {
        (**self).bound_c()
    }
}

impl<T: CostModel + ?Sized> CostModel for Box<T> {
    fn num_states(&self) -> usize {
        (**self).num_states()
    }
    fn theta(&self) -> f64 {
        (**self).theta()
    }
    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        (**self).travel_cost(s, mu)
    }
    fn travel_costs(&self, mu: &Distribution) -> Vec<f64> {
        (**self).travel_costs(mu)
    }
    fn inertia(&self, s: usize, next: usize) -> f64 {
        (**self).inertia(s, next)
    }
    fn bound_c(&self) -> f64 {
        (**self).bound_c()
    }
}

/// Cost model backed by a travel-cost closure and a dense inertia matrix.
/// Handy for small synthetic instances.
pub struct ClosureModel<F> {
    theta: f64,
    inertia: Vec<Vec<f64>>,
    bound_c: f64,
    travel: F,
}

impl<F> ClosureModel<F>
where
    F: Fn(usize, &Distribution) -> f64 + Sync,
{
    pub fn new(theta: f64, inertia: Vec<Vec<f64>>, bound_c: f64, travel: F) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::invalid(format!(
                "theta must be finite and > 0, got {theta}"
            )));
        }
        let m = inertia.len();
        if m == 0 || inertia.iter().any(|row| row.len() != m) {
            return Err(Error::invalid("inertia must be a non-empty square matrix"));
        }
        if inertia.iter().flatten().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid(
                "inertia entries must be finite and non-negative",
            ));
        }
        Ok(Self {
            theta,
            inertia,
            bound_c,
            travel,
        })
    }

    /// No inertia: `d = 0`.
    pub fn without_inertia(m: usize, theta: f64, bound_c: f64, travel: F) -> Result<Self> {
        Self::new(theta, vec![vec![0.0; m]; m], bound_c, travel)
    }
}

impl<F> CostModel for ClosureModel<F>
where
    F: Fn(usize, &Distribution) -> f64 + Sync,
{
    fn num_states(&self) -> usize {
        self.inertia.len()
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        (self.travel)(s, mu)
    }

    fn inertia(&self, s: usize, next: usize) -> f64 {
        self.inertia[s][next]
    }

    fn bound_c(&self) -> f64 {
        self.bound_c
    }
}
