//! Backward (best response) and forward (flow conservation) operators of the
//! entropy-penalized mean field game.

use crate::error::{ensure_len, Error, Result};
use crate::math::softmax_into;
use crate::model::CostModel;
use crate::types::{Distribution, MeanFieldSeq, Policy, PolicySeq, ValueSeq};

/// Largest rounding correction `forward_step` absorbs by renormalizing.
const RENORM_TOL: f64 = 1e-10;

fn check_values(what: &str, v: &[f64], m: usize) -> Result<()> {
    ensure_len(what, v.len(), m)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite value")));
    }
    Ok(())
}

/// Optimal Bellman backup given precomputed travel costs `f(., mu)`.
pub(crate) fn bellman_with_costs<C: CostModel + ?Sized>(
    v_next: &[f64],
    costs: &[f64],
    cm: &C,
) -> (Vec<f64>, Policy) {
    let m = v_next.len();
    let theta = cm.theta();
    let mut v = Vec::with_capacity(m);
    let mut data = vec![0.0; m * m];
    let mut scores = vec![0.0; m];
    for s in 0..m {
        for (x, z) in scores.iter_mut().enumerate() {
            *z = -theta * (cm.inertia(s, x) + v_next[x]);
        }
        let lse = softmax_into(&scores, &mut data[s * m..(s + 1) * m]);
        v.push(costs[s] - lse / theta);
    }
    (v, Policy::from_raw(m, data))
}

/// One application of the optimal Bellman operator.
///
/// Returns `V(s) = f(s, mu) - ln(sum_x exp(-theta (d(s, x) + V_next(x)))) / theta`
/// together with the logit policy attaining it.
pub fn bellman_apply<C: CostModel + ?Sized>(
    v_next: &[f64],
    mu: &Distribution,
    cm: &C,
) -> Result<(Vec<f64>, Policy)> {
    let m = cm.num_states();
    check_values("bellman_apply V_next", v_next, m)?;
    ensure_len("bellman_apply mu", mu.len(), m)?;
    let costs = cm.travel_costs(mu);
    check_values("travel costs", &costs, m)?;
    Ok(bellman_with_costs(v_next, &costs, cm))
}

/// Optimal response to a mean field sequence, computed backwards from `V_N = 0`.
pub fn backward_induction<C: CostModel + ?Sized>(
    mu: &MeanFieldSeq,
    cm: &C,
) -> Result<(ValueSeq, PolicySeq)> {
    let m = cm.num_states();
    ensure_len("backward_induction states", mu.num_states(), m)?;
    let horizon = mu.horizon();
    let mut values = vec![vec![0.0; m]; horizon + 1];
    let mut policies = Vec::with_capacity(horizon);
    for n in (0..horizon).rev() {
        let (v, pi) = bellman_apply(&values[n + 1], mu.day(n), cm)?;
        values[n] = v;
        policies.push(pi);
    }
    policies.reverse();
    Ok((ValueSeq::new(values)?, PolicySeq::new(policies)?))
}

/// Flow conservation: `out(s) = sum_x mu(x) pi(s | x)`.
pub fn forward_step(pi: &Policy, mu: &Distribution) -> Result<Distribution> {
    let m = pi.num_states();
    ensure_len("forward_step", mu.len(), m)?;
    let mut out = vec![0.0; m];
    for (x, row) in pi.rows().enumerate() {
        let w = mu[x];
        if w == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(row) {
            *o += w * p;
        }
    }
    let sum: f64 = out.iter().sum();
    if (sum - 1.0).abs() > RENORM_TOL {
        return Err(Error::numeric(format!(
            "forward_step lost mass: total {sum} differs from 1 by more than {RENORM_TOL}"
        )));
    }
    out.iter_mut().for_each(|o| *o /= sum);
    Ok(Distribution::from_raw(out))
}

/// Mean field sequence induced by `pi` from `mu0`. The day `N - 1` policy
/// only affects costs, so the result has exactly `N` days.
pub fn forward_propagate(pi: &PolicySeq, mu0: &Distribution) -> Result<MeanFieldSeq> {
    ensure_len("forward_propagate", mu0.len(), pi.num_states())?;
    let mut days = Vec::with_capacity(pi.horizon());
    days.push(mu0.clone());
    for n in 0..pi.horizon() - 1 {
        let next = forward_step(pi.day(n), &days[n])?;
        days.push(next);
    }
    MeanFieldSeq::new(days)
}

/// Expected remaining cost of following `pi` while the population follows `mu`.
pub fn policy_evaluate<C: CostModel + ?Sized>(
    pi: &PolicySeq,
    mu: &MeanFieldSeq,
    cm: &C,
) -> Result<ValueSeq> {
    let m = cm.num_states();
    ensure_len("policy_evaluate states", pi.num_states(), m)?;
    ensure_len("policy_evaluate states", mu.num_states(), m)?;
    ensure_len("policy_evaluate horizon", mu.horizon(), pi.horizon())?;
    let inv_theta = 1.0 / cm.theta();
    let horizon = pi.horizon();
    let mut values = vec![vec![0.0; m]; horizon + 1];
    for n in (0..horizon).rev() {
        let costs = cm.travel_costs(mu.day(n));
        let policy = pi.day(n);
        let mut v = vec![0.0; m];
        for (s, vs) in v.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (x, &p) in policy.row(s).iter().enumerate() {
                // 0 ln 0 := 0, and a zero-probability move costs nothing
                if p > 0.0 {
                    acc +=
                        p * (costs[s] + cm.inertia(s, x) + inv_theta * p.ln() + values[n + 1][x]);
                }
            }
            if !acc.is_finite() {
                return Err(Error::numeric(format!(
                    "policy_evaluate: non-finite value on day {n}, state {s}"
                )));
            }
            *vs = acc;
        }
        values[n] = v;
    }
    ValueSeq::new(values)
}

/// `J(pi)` against `mu`: the `mu0`-weighted day-0 value of `pi`.
pub fn total_cost<C: CostModel + ?Sized>(
    pi: &PolicySeq,
    mu: &MeanFieldSeq,
    cm: &C,
    mu0: &Distribution,
) -> Result<f64> {
    ensure_len("total_cost mu0", mu0.len(), cm.num_states())?;
    let values = policy_evaluate(pi, mu, cm)?;
    Ok(mu0
        .probs()
        .iter()
        .zip(values.day(0))
        .map(|(p, v)| p * v)
        .sum())
}

/// Checks the backup inequality
/// `G V_alt(s) <= G V(s) + sum_x pi(x|s) (V_alt(x) - V(x))` state by state,
/// and its `mu`-weighted aggregate
/// `sum_s mu(s) (G V_alt(s) - G V(s)) <= sum_s (V_alt(s) - V(s)) K_pi mu(s)`,
/// where `pi` is the optimal policy for `V`. Slack is `1e-9`.
pub fn concavity_check<C: CostModel + ?Sized>(
    v: &[f64],
    v_alt: &[f64],
    mu: &Distribution,
    cm: &C,
) -> Result<bool> {
    const SLACK: f64 = 1e-9;
    let (gv, pi) = bellman_apply(v, mu, cm)?;
    let (gv_alt, _) = bellman_apply(v_alt, mu, cm)?;
    let diff: Vec<f64> = v_alt.iter().zip(v).map(|(a, b)| a - b).collect();

    let per_state = (0..v.len()).all(|s| {
        let backup: f64 = pi.row(s).iter().zip(&diff).map(|(p, dv)| p * dv).sum();
        gv_alt[s] <= gv[s] + backup + SLACK
    });

    let pushed = forward_step(&pi, mu)?;
    let lhs: f64 = (0..v.len()).map(|s| mu[s] * (gv_alt[s] - gv[s])).sum();
    let rhs: f64 = diff.iter().zip(pushed.probs()).map(|(dv, q)| dv * q).sum();
    Ok(per_state && lhs <= rhs + SLACK)
}
