use std::ops::Index;

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted when validating a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

fn check_simplex(what: &str, probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::invalid(format!("{what}: empty probability vector")));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::invalid(format!(
            "{what}: entry {i} is {p}, expected a finite non-negative number"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!(
            "{what}: entries sum to {sum}, expected 1"
        )));
    }
    Ok(sum)
}

/// Population distribution over the `M` travel choices on one day.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates the entries (non-negative, summing to one within
    /// [`SIMPLEX_TOL`]) and divides out the residual rounding.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum = check_simplex("distribution", &probs)?;
        Ok(Self(probs.into_iter().map(|p| p / sum).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "uniform distribution needs at least one state");
        Self(vec![1.0 / m as f64; m])
    }

    pub fn one_hot(m: usize, s: usize) -> Result<Self> {
        if s >= m {
            return Err(Error::invalid(format!(
                "state {s} out of range for M = {m}"
            )));
        }
        let mut probs = vec![0.0; m];
        probs[s] = 1.0;
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid(
                "weights must be finite, non-negative and not all zero",
            ));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }
}

impl Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Row-stochastic `M x M` matrix; row `s` is the action distribution of a
/// commuter currently on choice `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    m: usize,
    data: Vec<f64>,
}

impl Policy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::invalid("policy: no rows"));
        }
        let mut data = Vec::with_capacity(m * m);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::invalid(format!(
                    "policy row {s}: dimension mismatch (got {}, expected {m})",
                    row.len()
                )));
            }
            let sum = check_simplex("policy row", &row)
                .map_err(|e| Error::invalid(format!("row {s}: {e}")))?;
            data.extend(row.into_iter().map(|p| p / sum));
        }
        Ok(Self { m, data })
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for s in 0..m {
            data[s * m + s] = 1.0;
        }
        Self { m, data }
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            m,
            data: vec![1.0 / m as f64; m * m],
        }
    }

    /// Every row equal to `q`.
    pub fn repeated_row(q: &Distribution) -> Self {
        let m = q.len();
        let mut data = Vec::with_capacity(m * m);
        for _ in 0..m {
            data.extend_from_slice(q.probs());
        }
        Self { m, data }
    }

    pub(crate) fn from_raw(m: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), m * m);
        Self { m, data }
    }

    pub fn num_states(&self) -> usize {
        self.m
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.m..(s + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    /// Probability of moving from `s` to `next`.
    pub fn get(&self, s: usize, next: usize) -> f64 {
        self.data[s * self.m + next]
    }
}

/// Mean field distributions for days `0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldSeq(Vec<Distribution>);

impl MeanFieldSeq {
    pub fn new(days: Vec<Distribution>) -> Result<Self> {
        let Some(first) = days.first() else {
            return Err(Error::invalid(
                "mean field sequence: horizon must be at least 1",
            ));
        };
        let m = first.len();
        for (n, d) in days.iter().enumerate() {
            if d.len() != m {
                return Err(Error::invalid(format!(
                    "mean field day {n}: dimension mismatch (got {}, expected {m})",
                    d.len()
                )));
            }
        }
        Ok(Self(days))
    }

    pub fn constant(mu: Distribution, horizon: usize) -> Self {
        assert!(horizon > 0);
        Self(vec![mu; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn num_states(&self) -> usize {
        self.0[0].len()
    }

    pub fn days(&self) -> &[Distribution] {
        &self.0
    }

    pub fn day(&self, n: usize) -> &Distribution {
        &self.0[n]
    }
}

/// Policies for days `0..N`; the day-`n` policy picks the choice for day `n + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySeq(Vec<Policy>);

impl PolicySeq {
    pub fn new(days: Vec<Policy>) -> Result<Self> {
        let Some(first) = days.first() else {
            return Err(Error::invalid(
                "policy sequence: horizon must be at least 1",
            ));
        };
        let m = first.num_states();
        for (n, p) in days.iter().enumerate() {
            if p.num_states() != m {
                return Err(Error::invalid(format!(
                    "policy day {n}: dimension mismatch (got {}, expected {m})",
                    p.num_states()
                )));
            }
        }
        Ok(Self(days))
    }

    pub fn uniform(m: usize, horizon: usize) -> Self {
        assert!(horizon > 0);
        Self(vec![Policy::uniform(m); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn num_states(&self) -> usize {
        self.0[0].num_states()
    }

    pub fn days(&self) -> &[Policy] {
        &self.0
    }

    pub fn day(&self, n: usize) -> &Policy {
        &self.0[n]
    }
}

/// Value functions `V_0..=V_N` with the terminal condition `V_N = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSeq(Vec<Vec<f64>>);

impl ValueSeq {
    pub fn new(days: Vec<Vec<f64>>) -> Result<Self> {
        if days.len() < 2 {
            return Err(Error::invalid("value sequence needs at least V_0 and V_N"));
        }
        let m = days[0].len();
        for (n, v) in days.iter().enumerate() {
            if v.len() != m {
                return Err(Error::invalid(format!(
                    "value day {n}: dimension mismatch (got {}, expected {m})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric(format!(
                    "value day {n} has a non-finite entry"
                )));
            }
        }
        if days.last().is_some_and(|v| v.iter().any(|x| *x != 0.0)) {
            return Err(Error::invalid(
                "terminal value V_N must be identically zero",
            ));
        }
        Ok(Self(days))
    }

    /// Horizon `N` (the sequence holds `N + 1` vectors).
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    pub fn days(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn day(&self, n: usize) -> &[f64] {
        &self.0[n]
    }
}
