//! Sup-norm distances on distributions, mean field sequences and policies.

use crate::error::{ensure_len, Result};
use crate::types::{Distribution, MeanFieldSeq, PolicySeq};

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `max_s |a(s) - b(s)|`.
pub fn dist_distance(a: &Distribution, b: &Distribution) -> Result<f64> {
    ensure_len("dist_distance", b.len(), a.len())?;
    Ok(max_abs_diff(a.probs(), b.probs()))
}

/// Largest per-day [`dist_distance`] over the horizon.
pub fn seq_distance(a: &MeanFieldSeq, b: &MeanFieldSeq) -> Result<f64> {
    ensure_len("seq_distance horizon", b.horizon(), a.horizon())?;
    let mut worst = 0.0f64;
    for (x, y) in a.days().iter().zip(b.days()) {
        worst = worst.max(dist_distance(x, y)?);
    }
    Ok(worst)
}

/// Largest row-wise sup distance over all days and states.
pub fn policy_distance(a: &PolicySeq, b: &PolicySeq) -> Result<f64> {
    ensure_len("policy_distance horizon", b.horizon(), a.horizon())?;
    ensure_len("policy_distance states", b.num_states(), a.num_states())?;
    let mut worst = 0.0f64;
    for (p, q) in a.days().iter().zip(b.days()) {
        for (r, t) in p.rows().zip(q.rows()) {
            worst = worst.max(max_abs_diff(r, t));
        }
    }
    Ok(worst)
}
