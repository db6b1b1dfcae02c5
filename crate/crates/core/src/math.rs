//! Numerically stable softmax helpers.

/// `ln(sum_i exp(z_i))`, shifted by the maximum so that no term overflows.
/// Returns `-inf` for an empty slice.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Writes `softmax(z)` into `out` and returns `log_sum_exp(z)`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) -> f64 {
    debug_assert_eq!(z.len(), out.len());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, x) in out.iter_mut().zip(z) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + sum.ln()
}

/// Logit choice probabilities `exp(-theta c_i) / sum_j exp(-theta c_j)`.
pub fn logit(costs: &[f64], theta: f64) -> Vec<f64> {
    let z: Vec<f64> = costs.iter().map(|c| -theta * c).collect();
    let mut out = vec![0.0; z.len()];
    softmax_into(&z, &mut out);
    out
}

/// `max - min` of a slice (0 for an empty slice).
pub fn spread(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}
