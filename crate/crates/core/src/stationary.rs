//! Stationary mean field equilibria and the equilibrium diagnostics that tie
//! them to logit SUE and state-dependent SUE.
//!
//! A stationary pair `(V, mu)` satisfies two conditions: one Bellman backup
//! against `mu` shifts `V` by a constant `lambda`, and the optimal policy for
//! `V` leaves `mu` invariant. `V` is only determined up to an additive
//! constant; solutions are normalized so that `V(0) = 0`.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{bellman_apply, bellman_with_costs, forward_step};
use crate::error::{ensure_len, Error, Result};
use crate::fictitious::{fictitious_play, FpConfig};
use crate::math::softmax_into;
use crate::metric::dist_distance;
use crate::model::CostModel;
use crate::types::{Distribution, MeanFieldSeq, Policy};

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPair {
    pub value: Vec<f64>,
    pub mu: Distribution,
    /// Per-day cost increment.
    pub lambda: f64,
    /// Optimal policy for `value` against `mu`.
    pub policy: Policy,
}

#[derive(Clone, Debug)]
pub struct SmfeConfig {
    /// Target for both residuals.
    pub tol: f64,
    /// Cap on outer iterations over all phases.
    pub max_outer: usize,
    /// Cap on relative value iteration sweeps when policy iteration fails.
    pub max_sweeps: usize,
    /// Initial damping on the distribution update.
    pub damping: f64,
    /// Damped iterations before switching to Newton steps on the distribution.
    pub damped_iters: usize,
    pub newton_iters: usize,
    /// Fictitious-play restart used when Newton stalls.
    pub fallback_horizon: usize,
    pub fallback_iters: usize,
}

impl Default for SmfeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 100_000,
            max_sweeps: 20_000,
            damping: 0.5,
            damped_iters: 1_000,
            newton_iters: 200,
            fallback_horizon: 200,
            fallback_iters: 200,
        }
    }
}

/// Residual bound every returned [`StationaryPair`] satisfies.
pub const SMFE_CONTRACT_TOL: f64 = 1e-8;

/// Relative value iteration at a fixed distribution. Returns the gauge-fixed
/// value (`W(0) = 0`), the mean backup increment over the last sweeps, and
/// whether the iteration settled within `max_sweeps`.
fn relative_value_iteration<C: CostModel + ?Sized>(
    w0: &[f64],
    costs: &[f64],
    cm: &C,
    max_sweeps: usize,
) -> (Vec<f64>, f64, bool) {
    const MIN_SWEEPS: usize = 10;
    let mut w: Vec<f64> = w0.iter().map(|x| x - w0[0]).collect();
    let mut increments = std::collections::VecDeque::with_capacity(MIN_SWEEPS);
    let mut settled = 0usize;
    let mean =
        |inc: &std::collections::VecDeque<f64>| inc.iter().sum::<f64>() / inc.len().max(1) as f64;
    for _ in 0..max_sweeps {
        let (g, _) = bellman_with_costs(&w, costs, cm);
        let inc = g[0];
        let next: Vec<f64> = g.iter().map(|x| x - inc).collect();
        let scale = 1.0 + next.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let change = next
            .iter()
            .zip(&w)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if increments.len() == MIN_SWEEPS {
            increments.pop_front();
        }
        increments.push_back(inc);
        w = next;
        if change <= 1e-13 * scale {
            settled += 1;
            if settled >= MIN_SWEEPS {
                return (w, mean(&increments), true);
            }
        } else {
            settled = 0;
        }
    }
    (w, mean(&increments), false)
}

/// Soft policy iteration: evaluate the current logit policy exactly (gauge
/// `h(0) = 0`), then improve it. Returns `None` if it does not settle, e.g.
/// when the evaluation system is singular.
fn policy_iteration<C: CostModel + ?Sized>(w0: &[f64], costs: &[f64], cm: &C) -> Option<Vec<f64>> {
    const MAX_STEPS: usize = 100;
    let m = w0.len();
    let inv_theta = 1.0 / cm.theta();
    let mut h: Vec<f64> = w0.iter().map(|x| x - w0[0]).collect();
    let mut prev_change = f64::INFINITY;
    for _ in 0..MAX_STEPS {
        let (_, pi) = bellman_with_costs(&h, costs, cm);
        // unknowns: lambda in slot 0, h(1..m) in the rest
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for s in 0..m {
            let mut c = costs[s];
            for (x, &p) in pi.row(s).iter().enumerate() {
                if p > 0.0 {
                    c += p * (cm.inertia(s, x) + inv_theta * p.ln());
                }
                if x > 0 {
                    a[(s, x)] -= p;
                }
            }
            a[(s, 0)] = 1.0;
            if s > 0 {
                a[(s, s)] += 1.0;
            }
            rhs[s] = c;
        }
        let sol = a.lu().solve(&rhs)?;
        let next: Vec<f64> = std::iter::once(0.0)
            .chain(sol.iter().skip(1).copied())
            .collect();
        if next.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let scale = 1.0 + next.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let change = next
            .iter()
            .zip(&h)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        h = next;
        // near-reducible chains leave the evaluation with rounding noise
        // well above 1e-13; stop once the updates stop shrinking there
        if change <= 1e-13 * scale || (change <= 1e-7 * scale && change >= 0.5 * prev_change) {
            return Some(h);
        }
        prev_change = change;
    }
    None
}

/// Average-cost solution at fixed costs: policy iteration for speed, then a
/// few relative value iteration sweeps whose mean increment gives `lambda`.
/// Falls back to plain relative value iteration; an unsettled result is
/// returned as is and shows up in the Bellman residual.
fn average_cost_solution<C: CostModel + ?Sized>(
    w0: &[f64],
    costs: &[f64],
    cm: &C,
    max_sweeps: usize,
) -> (Vec<f64>, f64) {
    const POLISH_SWEEPS: usize = 10;
    let Some(mut w) = policy_iteration(w0, costs, cm) else {
        let (w, lambda, settled) = relative_value_iteration(w0, costs, cm, max_sweeps);
        if !settled {
            debug!("relative value iteration did not settle in {max_sweeps} sweeps");
        }
        return (w, lambda);
    };
    let mut total = 0.0;
    for _ in 0..POLISH_SWEEPS {
        let (g, _) = bellman_with_costs(&w, costs, cm);
        total += g[0];
        w = g.iter().map(|x| x - g[0]).collect();
    }
    (w, total / POLISH_SWEEPS as f64)
}

/// Invariant distribution of a row-stochastic matrix, by a direct solve of
/// `mu (P - I) = 0`, `sum mu = 1`.
pub fn stationary_distribution(pi: &Policy) -> Result<Distribution> {
    let m = pi.num_states();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for s in 0..m {
        for x in 0..m {
            a[(x, s)] = pi.get(s, x) - if s == x { 1.0 } else { 0.0 };
        }
    }
    for s in 0..m {
        a[(m - 1, s)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric("policy has no unique stationary distribution"))?;
    Distribution::from_weights(sol.iter().map(|x| x.max(0.0)).collect())
}

/// `(r1, r2)`: the Bellman-shift residual `max_s |G V(s) - V(s) - lambda|` and
/// the invariance residual `d_f(K_pi mu, mu)`.
pub fn smfe_residuals<C: CostModel + ?Sized>(p: &StationaryPair, cm: &C) -> Result<(f64, f64)> {
    let (g, _) = bellman_apply(&p.value, &p.mu, cm)?;
    let r1 = g
        .iter()
        .zip(&p.value)
        .fold(0.0f64, |a, (gv, v)| a.max((gv - v - p.lambda).abs()));
    let r2 = dist_distance(&forward_step(&p.policy, &p.mu)?, &p.mu)?;
    Ok((r1, r2))
}

pub fn solve_smfe<C: CostModel + ?Sized>(
    cm: &C,
    init: Option<&Distribution>,
) -> Result<StationaryPair> {
    solve_smfe_with(cm, init, &SmfeConfig::default())
}

/// One evaluation of the outer fixed-point map at `mu`.
struct Probe {
    pair: StationaryPair,
    residuals: (f64, f64),
    /// Invariant distribution of the pair's policy.
    target: Distribution,
    /// `d_f(target, mu)`.
    gap: f64,
}

struct Outer<'a, C: ?Sized> {
    cm: &'a C,
    cfg: &'a SmfeConfig,
    evaluations: usize,
    warm: Vec<f64>,
    last: (f64, f64),
}

impl<C: CostModel + ?Sized> Outer<'_, C> {
    fn probe(&mut self, mu: Distribution) -> Result<Probe> {
        self.evaluations += 1;
        let costs = self.cm.travel_costs(&mu);
        let (value, lambda) =
            average_cost_solution(&self.warm, &costs, self.cm, self.cfg.max_sweeps);
        let (_, policy) = bellman_with_costs(&value, &costs, self.cm);
        let pair = StationaryPair {
            value,
            mu,
            lambda,
            policy,
        };
        let residuals = smfe_residuals(&pair, self.cm)?;
        let target = stationary_distribution(&pair.policy)?;
        let gap = dist_distance(&target, &pair.mu)?;
        if residuals.0.max(residuals.1) < self.last.0.max(self.last.1) {
            self.last = residuals;
        }
        Ok(Probe {
            pair,
            residuals,
            target,
            gap,
        })
    }

    fn done(&self, p: &Probe) -> bool {
        p.residuals.0 <= self.cfg.tol && p.residuals.1 <= self.cfg.tol
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= self.cfg.max_outer
    }

    /// Damped moves toward the invariant distribution; the step halves when
    /// the gap grows and recovers slowly while it shrinks.
    fn damped(
        &mut self,
        mu: Distribution,
    ) -> Result<std::result::Result<StationaryPair, Distribution>> {
        let mut step = self.cfg.damping;
        let mut prev_gap = f64::INFINITY;
        let mut streak = 0usize;
        let mut best: Option<(f64, Distribution)> = None;
        let mut mu = mu;
        for outer in 0..self.cfg.damped_iters {
            if self.exhausted() {
                break;
            }
            let p = self.probe(mu)?;
            if self.done(&p) {
                info!("s-MFE converged after {outer} damped iterations");
                return Ok(Ok(p.pair));
            }
            if best.as_ref().is_none_or(|(g, _)| p.gap < *g) {
                best = Some((p.gap, p.pair.mu.clone()));
            }
            if p.gap > prev_gap {
                step = (step * 0.5).max(1e-6);
                streak = 0;
            } else {
                streak += 1;
                if streak >= 10 {
                    step = (step * 1.25).min(self.cfg.damping);
                    streak = 0;
                }
            }
            prev_gap = p.gap;
            debug!(
                "s-MFE damped {outer}: r1 {:.3e} r2 {:.3e} gap {:.3e} step {step:.3e}",
                p.residuals.0, p.residuals.1, p.gap
            );
            self.warm = p.pair.value;
            let probs = p
                .pair
                .mu
                .probs()
                .iter()
                .zip(p.target.probs())
                .map(|(a, b)| (1.0 - step) * a + step * b)
                .collect();
            mu = Distribution::new(probs)?;
        }
        Ok(Err(best.map_or(mu, |(_, d)| d)))
    }

    /// Newton steps on `F(z) = target(softmax z) - softmax z` with the
    /// Jacobian from forward differences in the log-weights `z`, which keeps
    /// every iterate strictly positive. Steps are backtracked on the gap.
    fn newton(
        &mut self,
        mu: Distribution,
    ) -> Result<std::result::Result<StationaryPair, Distribution>> {
        const H: f64 = 1e-7;
        let m = self.cm.num_states();
        let mut cur = self.probe(mu)?;
        for iter in 0..self.cfg.newton_iters {
            if self.done(&cur) {
                info!("s-MFE converged after {iter} Newton steps");
                return Ok(Ok(cur.pair));
            }
            if self.exhausted() {
                break;
            }
            self.warm = cur.pair.value.clone();
            let z: Vec<f64> = cur.pair.mu.probs().iter().map(|p| p.ln()).collect();
            let f0 = residual_vector(&cur);
            let mut jac = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                let mut zi = z.clone();
                zi[i] += H;
                let p = self.probe(softmax_dist(&zi)?)?;
                for (k, fk) in residual_vector(&p).iter().enumerate() {
                    jac[(k, i)] = (fk - f0[k]) / H;
                }
            }
            let rhs = DVector::from_iterator(m, f0.iter().map(|x| -x));
            let svd = jac.svd(true, true);
            let cutoff = 1e-12 * svd.singular_values.max();
            let Ok(dz) = svd.solve(&rhs, cutoff) else {
                break;
            };
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + t * d).collect();
                if let Ok(next) = softmax_dist(&trial) {
                    let p = self.probe(next)?;
                    if p.gap < cur.gap || self.done(&p) {
                        cur = p;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            debug!(
                "s-MFE Newton {iter}: gap {:.3e} r1 {:.3e} r2 {:.3e} step {t:.3e}",
                cur.gap, cur.residuals.0, cur.residuals.1
            );
            if !accepted {
                break;
            }
        }
        if self.done(&cur) {
            return Ok(Ok(cur.pair));
        }
        Ok(Err(cur.pair.mu))
    }
}

fn residual_vector(p: &Probe) -> Vec<f64> {
    p.target
        .probs()
        .iter()
        .zip(p.pair.mu.probs())
        .map(|(a, b)| a - b)
        .collect()
}

fn softmax_dist(z: &[f64]) -> Result<Distribution> {
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Distribution::from_weights(out)
}

/// `cm` with its choice sensitivity replaced, for continuation in `theta`.
struct WithTheta<'a, C: ?Sized> {
    inner: &'a C,
    theta: f64,
}

impl<C: CostModel + ?Sized> CostModel for WithTheta<'_, C> {
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }
    fn theta(&self) -> f64 {
        self.theta
    }
    fn travel_cost(&self, s: usize, mu: &Distribution) -> f64 {
        self.inner.travel_cost(s, mu)
    }
    fn travel_costs(&self, mu: &Distribution) -> Vec<f64> {
        self.inner.travel_costs(mu)
    }
    fn inertia(&self, s: usize, next: usize) -> f64 {
        self.inner.inertia(s, next)
    }
    fn bound_c(&self) -> f64 {
        self.inner.bound_c()
    }
}

type Attempt = std::result::Result<StationaryPair, Distribution>;

/// Damped phase then Newton phase at the model's own `theta`.
fn attempt<C: CostModel + ?Sized>(
    cm: &C,
    cfg: &SmfeConfig,
    mu: Distribution,
    warm: Vec<f64>,
    used: &mut usize,
    last: &mut (f64, f64),
) -> Result<Attempt> {
    let mut outer = Outer {
        cm,
        cfg,
        evaluations: *used,
        warm,
        last: *last,
    };
    let mut result = outer.damped(mu)?;
    if let Err(mu) = result {
        debug!(
            "s-MFE at theta {}: damped phase stopped at {:?}; trying Newton",
            cm.theta(),
            outer.last
        );
        result = outer.newton(mu)?;
    }
    *used = outer.evaluations;
    *last = outer.last;
    Ok(result)
}

/// Newton phase only, for continuation steps that start near a solution.
fn newton_only<C: CostModel + ?Sized>(
    cm: &C,
    cfg: &SmfeConfig,
    mu: Distribution,
    warm: Vec<f64>,
    used: &mut usize,
    last: &mut (f64, f64),
) -> Result<Attempt> {
    let mut outer = Outer {
        cm,
        cfg,
        evaluations: *used,
        warm,
        last: *last,
    };
    let result = outer.newton(mu)?;
    *used = outer.evaluations;
    *last = outer.last;
    Ok(result)
}

/// Searches for a stationary pair in stages: damped moves of `mu` toward the
/// invariant distribution of its optimal policy, Newton steps from the best
/// damped iterate, continuation from a smaller `theta` where the damped
/// iteration converges, and finally Newton from the middle day of a
/// long-horizon equilibrium. Fails with the smallest residuals seen at the
/// model's own `theta`.
pub fn solve_smfe_with<C: CostModel + ?Sized>(
    cm: &C,
    init: Option<&Distribution>,
    cfg: &SmfeConfig,
) -> Result<StationaryPair> {
    const MAX_HALVINGS: usize = 12;
    let m = cm.num_states();
    let mu0 = match init {
        Some(d) => {
            ensure_len("solve_smfe init", d.len(), m)?;
            d.clone()
        }
        None => Distribution::uniform(m),
    };
    let mut used = 0usize;
    let mut last = (f64::INFINITY, f64::INFINITY);
    let stalled = match attempt(cm, cfg, mu0.clone(), vec![0.0; m], &mut used, &mut last)? {
        Ok(pair) => return Ok(pair),
        Err(mu) => mu,
    };

    info!("s-MFE: direct solve stalled with residuals {last:?}; continuing in theta");
    // residuals at a scaled theta say nothing about the caller's model
    let mut scratch = (f64::INFINITY, f64::INFINITY);
    let theta = cm.theta();
    let mut base = None;
    let mut lo = theta;
    for _ in 0..MAX_HALVINGS {
        if used >= cfg.max_outer {
            break;
        }
        lo *= 0.5;
        let scaled = WithTheta {
            inner: cm,
            theta: lo,
        };
        if let Ok(pair) = attempt(
            &scaled,
            cfg,
            mu0.clone(),
            vec![0.0; m],
            &mut used,
            &mut scratch,
        )? {
            base = Some(pair);
            break;
        }
    }
    if let Some(mut pair) = base {
        let mut factor: f64 = 1.5;
        while used < cfg.max_outer && factor > 1.001 {
            let next = (lo * factor).min(theta);
            let scaled = WithTheta {
                inner: cm,
                theta: next,
            };
            let warm = pair.value.clone();
            match newton_only(&scaled, cfg, pair.mu.clone(), warm, &mut used, &mut scratch)? {
                Ok(found) => {
                    debug!("s-MFE continuation reached theta {next}");
                    if next >= theta {
                        info!("s-MFE converged by continuation in theta");
                        // recompute against the caller's model so the policy is exact
                        return finish(cm, cfg, found, &mut used, &mut last);
                    }
                    pair = found;
                    lo = next;
                    factor = (factor * 1.5).min(2.0);
                }
                Err(_) => factor = factor.sqrt(),
            }
        }
        debug!("s-MFE continuation stopped at theta {lo}");
    }

    if used < cfg.max_outer {
        info!("s-MFE: restarting from a long-horizon equilibrium");
        let restart = long_horizon_midpoint(cm, &stalled, cfg)?;
        if let Ok(pair) = newton_only(cm, cfg, restart, vec![0.0; m], &mut used, &mut last)? {
            return Ok(pair);
        }
    }
    Err(Error::SolverFailure {
        solver: "solve_smfe",
        iterations: used,
        residuals: vec![last.0, last.1],
    })
}

/// Re-solves at `cm` from a pair found through a [`WithTheta`] wrapper.
fn finish<C: CostModel + ?Sized>(
    cm: &C,
    cfg: &SmfeConfig,
    found: StationaryPair,
    used: &mut usize,
    last: &mut (f64, f64),
) -> Result<StationaryPair> {
    match newton_only(cm, cfg, found.mu, found.value, used, last)? {
        Ok(pair) => Ok(pair),
        Err(_) => Err(Error::SolverFailure {
            solver: "solve_smfe",
            iterations: *used,
            residuals: vec![last.0, last.1],
        }),
    }
}

/// Middle day of a long-horizon mean field equilibrium started from `mu0`.
fn long_horizon_midpoint<C: CostModel + ?Sized>(
    cm: &C,
    mu0: &Distribution,
    cfg: &SmfeConfig,
) -> Result<Distribution> {
    let mut fp = FpConfig::new(mu0.clone(), cfg.fallback_horizon);
    fp.max_iters = cfg.fallback_iters;
    fp.record_trace = false;
    let report = fictitious_play(cm, &fp)?;
    Ok(report.avg_mf.day(cfg.fallback_horizon / 2).clone())
}

/// `max_k |mu(k) - sum_j mu(j) pi(k | j)|`: zero exactly when `mu` is a
/// state-dependent SUE of the switching model `pi`.
pub fn sdsue_check(mu: &Distribution, pi: &Policy) -> Result<f64> {
    dist_distance(&forward_step(pi, mu)?, mu)
}

/// With switching cost `epsilon` for any change of choice, checks that every
/// pair with `V(x) > V(y)` satisfies
/// `V(x) - V(y) > f(x) - f(y) > V(x) - V(y) - epsilon` (slack `1e-9`).
pub fn value_gap_check<C: CostModel + ?Sized>(
    p: &StationaryPair,
    cm: &C,
    epsilon: f64,
) -> Result<bool> {
    const SLACK: f64 = 1e-9;
    let m = cm.num_states();
    for s in 0..m {
        for x in 0..m {
            let expected = if s == x { 0.0 } else { epsilon };
            if (cm.inertia(s, x) - expected).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "value_gap_check needs indicator inertia {epsilon}, found d({s}, {x}) = {}",
                    cm.inertia(s, x)
                )));
            }
        }
    }
    let f = cm.travel_costs(&p.mu);
    let v = &p.value;
    for x in 0..m {
        for y in 0..m {
            if v[x] > v[y] + 1e-10 {
                let dv = v[x] - v[y];
                let df = f[x] - f[y];
                if epsilon > 0.0 {
                    if !(dv + SLACK > df && df + SLACK > dv - epsilon) {
                        return Ok(false);
                    }
                } else if (dv - df).abs() > SLACK {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Natural log of `1 / (M exp(4 theta C))`, the positivity floor of every
/// equilibrium distribution after day 0.
pub fn log_omega(m: usize, theta: f64, bound_c: f64) -> f64 {
    -(m as f64).ln() - 4.0 * theta * bound_c
}

/// Checks `mu_n(s) >= 1 / (M exp(4 theta C))` for `n >= 1`. The comparison
/// is made in log space since the floor underflows for realistic costs.
pub fn omega_bound_check<C: CostModel + ?Sized>(mfe_mu: &MeanFieldSeq, cm: &C) -> bool {
    let floor = log_omega(cm.num_states(), cm.theta(), cm.bound_c());
    mfe_mu
        .days()
        .iter()
        .skip(1)
        .flat_map(|d| d.probs())
        .all(|p| *p > 0.0 && p.ln() >= floor)
}

/// `V(s) + ln(mu(s)) / theta`; flat exactly at a logit equilibrium.
pub fn augmented_cost_profile(mu: &Distribution, values: &[f64], theta: f64) -> Result<Vec<f64>> {
    ensure_len("augmented_cost_profile", values.len(), mu.len())?;
    if let Some(s) = mu.probs().iter().position(|p| *p <= 0.0) {
        return Err(Error::invalid(format!(
            "augmented_cost_profile: mu({s}) is zero"
        )));
    }
    Ok(mu
        .probs()
        .iter()
        .zip(values)
        .map(|(p, v)| v + p.ln() / theta)
        .collect())
}
