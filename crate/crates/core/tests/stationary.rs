mod common;

use common::{random_dist, Synthetic};
use mfg_core::route::{logit_sue, RoadNetwork, RouteInertiaSpec, RouteModel};
use mfg_core::stationary::{
    augmented_cost_profile, omega_bound_check, sdsue_check, smfe_residuals, solve_smfe,
    value_gap_check, StationaryPair, SMFE_CONTRACT_TOL,
};
use mfg_core::{
    bellman_apply, dist_distance, fictitious_play, ClosureModel, CostModel, Distribution, FpConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn route(epsilon: f64, theta: f64) -> RouteModel {
    RouteModel::new(
        RoadNetwork::grid9(),
        RouteInertiaSpec::indicator(epsilon),
        theta,
    )
    .unwrap()
}

fn skewed_mu0() -> Distribution {
    Distribution::new(vec![0.1, 0.1, 0.5, 0.1, 0.1, 0.1]).unwrap()
}

#[test]
fn no_inertia_recovers_logit_sue() {
    for theta in [1.0, 20.0] {
        let cm = route(0.0, theta);
        let pair = solve_smfe(&cm, None).unwrap();
        let sue = logit_sue(cm.network(), theta).unwrap();
        assert!(dist_distance(&pair.mu, &sue).unwrap() <= 1e-7);
        let (r1, r2) = smfe_residuals(&pair, &cm).unwrap();
        assert!(r1 <= SMFE_CONTRACT_TOL && r2 <= SMFE_CONTRACT_TOL);
        // with d = 0 the relative values are the relative travel costs
        let f = cm.travel_costs(&pair.mu);
        for s in 0..6 {
            assert!((pair.value[s] - pair.value[0] - (f[s] - f[0])).abs() <= 1e-7);
        }
        assert!(value_gap_check(&pair, &cm, 0.0).unwrap());
    }
}

#[test]
fn pair_built_from_sue_is_stationary() {
    let theta = 1.0;
    let cm = route(0.0, theta);
    let mu = logit_sue(cm.network(), theta).unwrap();
    let value = cm.travel_costs(&mu);
    let (g, policy) = bellman_apply(&value, &mu, &cm).unwrap();
    let lambda = g[0] - value[0];
    let pair = StationaryPair {
        value,
        mu,
        lambda,
        policy,
    };
    let (r1, r2) = smfe_residuals(&pair, &cm).unwrap();
    assert!(r1 <= 1e-7 && r2 <= 1e-7, "{r1} {r2}");
}

#[test]
fn perturbed_distribution_leaves_invariance_residual() {
    let cm = route(1.0, 1.0);
    let mut pair = solve_smfe(&cm, None).unwrap();
    let mut probs = pair.mu.clone().into_inner();
    probs[0] += 0.05;
    probs[3] -= 0.05;
    pair.mu = Distribution::new(probs).unwrap();
    let (_, r2) = smfe_residuals(&pair, &cm).unwrap();
    assert!(r2 > 1e-3);
    // frozen from the first run
    assert!((r2 - 0.035_982_460_364_948_54).abs() <= 1e-6, "{r2}");
}

#[test]
fn value_gap_with_indicator_inertia() {
    let cm = route(1.0, 1.0);
    let pair = solve_smfe(&cm, None).unwrap();
    assert!(value_gap_check(&pair, &cm, 1.0).unwrap());
    assert!(sdsue_check(&pair.mu, &pair.policy).unwrap() <= SMFE_CONTRACT_TOL);
    let overlap =
        RouteModel::new(RoadNetwork::grid9(), RouteInertiaSpec::overlap(1.0), 1.0).unwrap();
    assert!(value_gap_check(&pair, &overlap, 1.0).is_err());
}

fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let rising = g(hi) > g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-state stationary pair by nested bisection: for a share `p` of state 0
/// the gap `h = V(1) - V(0)` solves the Bellman difference equation, and `p`
/// balances the switching flows.
fn two_state_oracle(theta: f64, eps: f64, f: impl Fn(f64) -> (f64, f64)) -> (f64, f64) {
    let gap = |p: f64| {
        let (f0, f1) = f(p);
        bisect(-100.0, 100.0, |h| {
            let stay0 = 1.0 + (-theta * (eps + h)).exp();
            let from1 = (-theta * eps).exp() + (-theta * h).exp();
            h - (f1 - f0) + (from1.ln() - stay0.ln()) / theta
        })
    };
    let balance = |p: f64| {
        let h = gap(p);
        let leave0 = 1.0 / (1.0 + (theta * (eps + h)).exp());
        let leave1 = 1.0 / (1.0 + (theta * (eps - h)).exp());
        p * leave0 - (1.0 - p) * leave1
    };
    let p = bisect(1e-9, 1.0 - 1e-9, balance);
    (p, gap(p))
}

#[test]
fn two_state_value_gap() {
    let (theta, eps) = (2.0, 0.5);
    let travel = |s: usize, mu: &Distribution| {
        if s == 0 {
            1.0 + mu[0]
        } else {
            1.5 + 0.5 * mu[1]
        }
    };
    let cm = ClosureModel::new(theta, vec![vec![0.0, eps], vec![eps, 0.0]], 4.0, travel).unwrap();
    let pair = solve_smfe(&cm, None).unwrap();
    assert!(value_gap_check(&pair, &cm, eps).unwrap());

    let (p, h) = two_state_oracle(theta, eps, |p| (1.0 + p, 1.5 + 0.5 * (1.0 - p)));
    assert!((pair.mu[0] - p).abs() <= 1e-9, "{} vs {p}", pair.mu[0]);
    let dv = pair.value[1] - pair.value[0];
    assert!((dv - h).abs() <= 1e-9, "{dv} vs {h}");

    let f = cm.travel_costs(&pair.mu);
    let df = f[1] - f[0];
    // the ordering runs from the cheaper state 0 to state 1 here
    let (hi, lo) = if dv > 0.0 { (dv, df) } else { (-dv, -df) };
    assert!(hi > lo && lo > hi - eps);
    // frozen from the first run
    assert!((dv - 0.154_608_104_165_110_4).abs() <= 1e-9, "{dv}");
    assert!((df - 0.083_605_862_909_584_83).abs() <= 1e-9, "{df}");
}

#[test]
fn unique_from_random_starts() {
    let cm = route(1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let sols: Vec<Distribution> = (0..10)
        .map(|_| solve_smfe(&cm, Some(&random_dist(&mut rng, 6))).unwrap().mu)
        .collect();
    for a in &sols {
        for b in &sols {
            assert!(dist_distance(a, b).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn smfe_on_random_models_is_an_sdsue() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let m = rng.gen_range(2..=5);
        let cm = Synthetic::random(&mut rng, m);
        let pair = solve_smfe(&cm, Some(&random_dist(&mut rng, m))).unwrap();
        let (r1, r2) = smfe_residuals(&pair, &cm).unwrap();
        assert!(r1 <= SMFE_CONTRACT_TOL && r2 <= SMFE_CONTRACT_TOL);
        assert!(sdsue_check(&pair.mu, &pair.policy).unwrap() <= SMFE_CONTRACT_TOL);
        assert_eq!(pair.value[0], 0.0);
    }
}

#[test]
fn late_days_approach_the_stationary_pair() {
    let cm = route(1.0, 1.0);
    let pair = solve_smfe(&cm, None).unwrap();
    let mut cfg = FpConfig::new(skewed_mu0(), 30);
    cfg.max_iters = 5_000;
    let report = fictitious_play(&cm, &cfg).unwrap();
    for n in 10..30 {
        assert!(
            dist_distance(report.avg_mf.day(n), &pair.mu).unwrap() <= 1e-2,
            "day {n}"
        );
    }
    assert!(omega_bound_check(&report.avg_mf, &cm));
}

#[test]
fn omega_bound_at_high_theta() {
    let cm = route(0.0, 20.0);
    let mut cfg = FpConfig::new(skewed_mu0(), 30);
    cfg.max_iters = 100;
    let report = fictitious_play(&cm, &cfg).unwrap();
    assert!(omega_bound_check(&report.avg_mf, &cm));
}

#[test]
fn augmented_profile_rejects_zero_mass() {
    let mu = Distribution::one_hot(3, 1).unwrap();
    assert!(augmented_cost_profile(&mu, &[0.0, 0.0, 0.0], 1.0).is_err());
    let mu = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
    let profile = augmented_cost_profile(&mu, &[1.0, 2.0, 3.0], 2.0).unwrap();
    assert!((profile[1] - (2.0 + 0.3f64.ln() / 2.0)).abs() < 1e-15);
}
