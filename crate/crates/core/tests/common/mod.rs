#![allow(dead_code)]

use mfg_core::{CostModel, Distribution, Policy, PolicySeq};
use proptest::prelude::*;
use rand::Rng;

/// `f(s, mu) = base[s] + slope[s] * mu(s)` with a dense inertia matrix.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub theta: f64,
    pub base: Vec<f64>,
    pub slope: Vec<f64>,
    pub inertia: Vec<Vec<f64>>,
}

impl CostModel for Synthetic {
    fn num_states(&self) -> usize {
        self.base.len()
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        self.base[s] + self.slope[s] * mu[s]
    }

    fn inertia(&self, s: usize, next: usize) -> f64 {
        self.inertia[s][next]
    }

    fn bound_c(&self) -> f64 {
        let f = self
            .base
            .iter()
            .zip(&self.slope)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max);
        let d = self.inertia.iter().flatten().copied().fold(0.0, f64::max);
        f.max(d)
    }
}

impl Synthetic {
    pub fn random(rng: &mut impl Rng, m: usize) -> Self {
        let theta = rng.gen_range(0.2..3.0);
        let base = (0..m).map(|_| rng.gen_range(0.0..5.0)).collect();
        let slope = (0..m).map(|_| rng.gen_range(0.0..5.0)).collect();
        let inertia = (0..m)
            .map(|s| {
                (0..m)
                    .map(|x| if s == x { 0.0 } else { rng.gen_range(0.0..2.0) })
                    .collect()
            })
            .collect();
        Self {
            theta,
            base,
            slope,
            inertia,
        }
    }
}

pub fn random_dist(rng: &mut impl Rng, m: usize) -> Distribution {
    let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
    Distribution::from_weights(w).unwrap()
}

pub fn random_policy(rng: &mut impl Rng, m: usize) -> Policy {
    Policy::from_rows((0..m).map(|_| random_dist(rng, m).into_inner()).collect()).unwrap()
}

pub fn random_policy_seq(rng: &mut impl Rng, m: usize, horizon: usize) -> PolicySeq {
    PolicySeq::new((0..horizon).map(|_| random_policy(rng, m)).collect()).unwrap()
}

pub fn dist_strategy(m: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(1e-6..1.0f64, m).prop_map(|w| Distribution::from_weights(w).unwrap())
}

/// Possibly sparse distribution: entries are exactly zero about a third of the time.
pub fn sparse_dist_strategy(m: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64, 0.0..1.0f64], m).prop_map(
        move |mut w| {
            if w.iter().sum::<f64>() <= 0.0 {
                w[0] = 1.0;
            }
            Distribution::from_weights(w).unwrap()
        },
    )
}

pub fn values_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, m)
}

pub fn synthetic_strategy(m: usize) -> impl Strategy<Value = Synthetic> {
    (
        0.1..5.0f64,
        prop::collection::vec(0.0..10.0f64, m),
        prop::collection::vec(0.0..10.0f64, m),
        prop::collection::vec(0.0..3.0f64, m * m),
    )
        .prop_map(move |(theta, base, slope, d)| Synthetic {
            theta,
            base,
            slope,
            inertia: (0..m)
                .map(|s| {
                    (0..m)
                        .map(|x| if s == x { 0.0 } else { d[s * m + x] })
                        .collect()
                })
                .collect(),
        })
}

/// Model and matching dimension in one strategy.
pub fn sized_model() -> impl Strategy<Value = Synthetic> {
    (2usize..7).prop_flat_map(synthetic_strategy)
}
