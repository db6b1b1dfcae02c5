//! Fictitious play for the finite-horizon mean field equilibrium.
//!
//! Each iteration best-responds to the running average mean field, propagates
//! the response from `mu0`, and folds both into running averages. The averaged
//! policy is weighted by occupancy so that it reproduces the averaged mean
//! field exactly.

use log::{debug, info};

use crate::dynamics::{backward_induction, forward_propagate, total_cost};
use crate::error::{ensure_len, Error, Result};
use crate::metric::seq_distance;
use crate::model::CostModel;
use crate::types::{Distribution, MeanFieldSeq, Policy, PolicySeq, ValueSeq};

/// Tolerance used to decide that a `(pi, mu)` pair is consistent.
const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct FpConfig {
    /// Iteration budget `J`.
    pub max_iters: usize,
    /// Stop once the averaged pair is this close to a best response.
    pub exploitability_tol: f64,
    pub horizon: usize,
    pub mu0: Distribution,
    /// Defaults to uniform rows on every day.
    pub initial_policy: Option<PolicySeq>,
    /// Keep every iteration's exploitability (otherwise only the last).
    pub record_trace: bool,
}

impl FpConfig {
    pub const DEFAULT_MAX_ITERS: usize = 500;
    pub const DEFAULT_TOL: f64 = 1e-6;

    pub fn new(mu0: Distribution, horizon: usize) -> Self {
        Self {
            max_iters: Self::DEFAULT_MAX_ITERS,
            exploitability_tol: Self::DEFAULT_TOL,
            horizon,
            mu0,
            initial_policy: None,
            record_trace: true,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.exploitability_tol.is_nan() || self.exploitability_tol <= 0.0 {
            return Err(Error::invalid("exploitability_tol must be > 0"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        ensure_len("mu0", self.mu0.len(), m)?;
        if let Some(p) = &self.initial_policy {
            ensure_len("initial_policy horizon", p.horizon(), self.horizon)?;
            ensure_len("initial_policy states", p.num_states(), m)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub avg_policy: PolicySeq,
    pub avg_mf: MeanFieldSeq,
    /// Optimal values against `avg_mf`.
    pub value_seq: ValueSeq,
    /// Exploitability of the initial pair, before any iteration.
    pub initial_exploitability: f64,
    /// Exploitability of the averaged pair after iterations `1..=iterations_run`
    /// (only the last entry when tracing is off).
    pub exploitability_trace: Vec<f64>,
    pub final_exploitability: f64,
    pub iterations_run: usize,
    pub converged: bool,
}

/// `mu_bar^j = ((j - 1) / j) mu_bar^{j-1} + mu^j / j`, day by day. Computed
/// as `mu_bar + (mu - mu_bar) / j` so days where the two agree stay exact.
pub fn fp_average_mf(
    prev_avg: &MeanFieldSeq,
    new_mf: &MeanFieldSeq,
    j: usize,
) -> Result<MeanFieldSeq> {
    if j == 0 {
        return Err(Error::invalid("averaging index j must be >= 1"));
    }
    ensure_len(
        "fp_average_mf horizon",
        new_mf.horizon(),
        prev_avg.horizon(),
    )?;
    ensure_len(
        "fp_average_mf states",
        new_mf.num_states(),
        prev_avg.num_states(),
    )?;
    if j == 1 {
        return Ok(new_mf.clone());
    }
    let j = j as f64;
    let days = prev_avg
        .days()
        .iter()
        .zip(new_mf.days())
        .map(|(a, b)| {
            let probs = a
                .probs()
                .iter()
                .zip(b.probs())
                .map(|(x, y)| x + (y - x) / j)
                .collect();
            Distribution::new(probs)
        })
        .collect::<Result<Vec<_>>>()?;
    MeanFieldSeq::new(days)
}

/// Running occupancy-weighted policy average: per `(n, s, a)` numerator
/// `sum_i mu_n^i(s) pi_n^i(a|s)` and per `(n, s)` denominator `sum_i mu_n^i(s)`.
#[derive(Clone, Debug)]
pub struct PolicyAverager {
    m: usize,
    horizon: usize,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl PolicyAverager {
    pub fn new(m: usize, horizon: usize) -> Self {
        Self {
            m,
            horizon,
            num: vec![0.0; horizon * m * m],
            den: vec![0.0; horizon * m],
        }
    }

    pub fn add(&mut self, mu: &MeanFieldSeq, pi: &PolicySeq) -> Result<()> {
        ensure_len("policy average horizon", mu.horizon(), self.horizon)?;
        ensure_len("policy average horizon", pi.horizon(), self.horizon)?;
        ensure_len("policy average states", mu.num_states(), self.m)?;
        ensure_len("policy average states", pi.num_states(), self.m)?;
        let m = self.m;
        for n in 0..self.horizon {
            let (mu_n, pi_n) = (mu.day(n), pi.day(n));
            for s in 0..m {
                let w = mu_n[s];
                self.den[n * m + s] += w;
                let base = (n * m + s) * m;
                for (acc, p) in self.num[base..base + m].iter_mut().zip(pi_n.row(s)) {
                    *acc += w * p;
                }
            }
        }
        Ok(())
    }

    /// Current average; rows that never received mass are uniform.
    pub fn current(&self) -> PolicySeq {
        let m = self.m;
        let days = (0..self.horizon)
            .map(|n| {
                let mut data = Vec::with_capacity(m * m);
                for s in 0..m {
                    let den = self.den[n * m + s];
                    let base = (n * m + s) * m;
                    let row = &self.num[base..base + m];
                    let total: f64 = row.iter().sum();
                    if den > 0.0 && total > 0.0 {
                        // num/den, with the division by den folded into a
                        // renormalization that also absorbs rounding
                        data.extend(row.iter().map(|x| x / total));
                    } else {
                        data.extend(std::iter::repeat_n(1.0 / m as f64, m));
                    }
                }
                Policy::from_raw(m, data)
            })
            .collect();
        PolicySeq::new(days).expect("averager horizon is at least 1")
    }
}

/// Occupancy-weighted average of the first `j` entries of `history`.
pub fn fp_average_policy(history: &[(MeanFieldSeq, PolicySeq)], j: usize) -> Result<PolicySeq> {
    if j == 0 || j > history.len() {
        return Err(Error::invalid(format!(
            "averaging index j = {j} must lie in 1..={}",
            history.len()
        )));
    }
    let (mu, pi) = &history[0];
    let mut avg = PolicyAverager::new(pi.num_states(), pi.horizon());
    avg.add(mu, pi)?;
    for (mu, pi) in &history[1..j] {
        avg.add(mu, pi)?;
    }
    Ok(avg.current())
}

/// Gap between the total cost of `pi` against `mu` and the best-response cost
/// against the same `mu`. `mu` must be the flow induced by `pi` from `mu0`.
pub fn exploitability<C: CostModel + ?Sized>(
    pi: &PolicySeq,
    mu: &MeanFieldSeq,
    cm: &C,
    mu0: &Distribution,
) -> Result<f64> {
    Ok(exploitability_with_response(pi, mu, cm, mu0)?.0)
}

/// Exploitability together with the optimal values and best response to `mu`.
fn exploitability_with_response<C: CostModel + ?Sized>(
    pi: &PolicySeq,
    mu: &MeanFieldSeq,
    cm: &C,
    mu0: &Distribution,
) -> Result<(f64, ValueSeq, PolicySeq)> {
    let induced = forward_propagate(pi, mu0)?;
    let gap = seq_distance(&induced, mu)?;
    if gap > CONSISTENCY_TOL {
        return Err(Error::invalid(format!(
            "exploitability: mean field is not induced by the policy (distance {gap:e})"
        )));
    }
    let (values, best) = backward_induction(mu, cm)?;
    // the optimal values are the best response's expected cost
    let best_cost: f64 = mu0
        .probs()
        .iter()
        .zip(values.day(0))
        .map(|(p, v)| p * v)
        .sum();
    Ok((total_cost(pi, mu, cm, mu0)? - best_cost, values, best))
}

pub fn fictitious_play<C: CostModel + ?Sized>(cm: &C, cfg: &FpConfig) -> Result<SolverReport> {
    let m = cm.num_states();
    cfg.validate(m)?;
    let initial_policy = cfg
        .initial_policy
        .clone()
        .unwrap_or_else(|| PolicySeq::uniform(m, cfg.horizon));
    let mut avg_mf = forward_propagate(&initial_policy, &cfg.mu0)?;
    let (initial_exploitability, mut value_seq, mut best) =
        exploitability_with_response(&initial_policy, &avg_mf, cm, &cfg.mu0)?;
    info!(
        "fictitious play: M = {m}, N = {}, J = {}, initial exploitability {initial_exploitability:.6e}",
        cfg.horizon, cfg.max_iters
    );

    let mut averager = PolicyAverager::new(m, cfg.horizon);
    let mut avg_policy = initial_policy;
    let mut trace = Vec::new();
    let mut last = initial_exploitability;
    let mut converged = false;
    let mut iterations_run = 0;

    for j in 1..=cfg.max_iters {
        // `best` answers the current average, computed with its exploitability
        let induced = forward_propagate(&best, &cfg.mu0)?;
        averager.add(&induced, &best)?;
        avg_mf = fp_average_mf(&avg_mf, &induced, j)?;
        avg_policy = averager.current();

        (last, value_seq, best) = exploitability_with_response(&avg_policy, &avg_mf, cm, &cfg.mu0)?;
        if cfg.record_trace {
            trace.push(last);
        }
        iterations_run = j;
        debug!("fictitious play iteration {j}: exploitability {last:.6e}");
        if last <= cfg.exploitability_tol {
            converged = true;
            break;
        }
    }
    if !cfg.record_trace {
        trace.push(last);
    }
    info!("fictitious play finished after {iterations_run} iterations, exploitability {last:.6e}, converged = {converged}");

    Ok(SolverReport {
        avg_policy,
        avg_mf,
        value_seq,
        initial_exploitability,
        exploitability_trace: trace,
        final_exploitability: last,
        iterations_run,
        converged,
    })
}
