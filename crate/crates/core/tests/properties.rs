//! Randomized invariants, 1000 cases each.

mod common;

use common::{dist_strategy, sized_model, sparse_dist_strategy, values_strategy, Synthetic};
use mfg_core::bottleneck::BottleneckSpec;
use mfg_core::route::RoadNetwork;
use mfg_core::stationary::{sdsue_check, stationary_distribution};
use mfg_core::{
    backward_induction, bellman_apply, concavity_check, dist_distance, forward_step, total_cost,
    CostModel, Distribution, MeanFieldSeq, Policy, PolicySeq,
};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

/// A model together with inputs of matching dimension.
fn model_with_inputs() -> impl Strategy<Value = (Synthetic, Vec<f64>, Vec<f64>, Distribution)> {
    sized_model().prop_flat_map(|cm| {
        let m = cm.num_states();
        (
            Just(cm),
            values_strategy(m),
            values_strategy(m),
            dist_strategy(m),
        )
    })
}

fn policy_strategy(m: usize) -> impl Strategy<Value = Policy> {
    prop::collection::vec(dist_strategy(m), m).prop_map(|rows| {
        Policy::from_rows(rows.into_iter().map(Distribution::into_inner).collect()).unwrap()
    })
}

fn bottleneck_strategy() -> impl Strategy<Value = (BottleneckSpec, Distribution)> {
    (1usize..=12, 0.5..4.0f64, 100.0..6000.0f64, 0.0..1.0f64).prop_flat_map(
        |(slices, window, capacity, r_frac)| {
            let spec = BottleneckSpec {
                slices,
                window,
                capacity,
                demand: 6000.0,
                alpha: 10.0,
                beta: 5.0,
                gamma: 15.0,
                r: r_frac * window,
                epsilon: 1.0,
                slice_center: false,
            };
            (Just(spec), sparse_dist_strategy(slices))
        },
    )
}

fn assert_row_stochastic(p: &Policy) -> Result<(), TestCaseError> {
    for row in p.rows() {
        let sum: f64 = row.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "row sums to {}", sum);
        prop_assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    Ok(())
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn concavity_holds((cm, v, v_alt, mu) in model_with_inputs()) {
        prop_assert!(concavity_check(&v, &v_alt, &mu, &cm).unwrap());
    }

    #[test]
    fn backup_differences_within_three_c(
        (cm, v, _, mu) in model_with_inputs(),
        picks in (0usize..64, 0usize..64),
    ) {
        let m = cm.num_states();
        let (g, _) = bellman_apply(&v, &mu, &cm).unwrap();
        let (s, t) = (picks.0 % m, picks.1 % m);
        prop_assert!((g[s] - g[t]).abs() <= 3.0 * cm.bound_c() + 1e-9);
    }

    #[test]
    fn translation_invariance((cm, v, _, mu) in model_with_inputs(), c in -100.0..100.0f64) {
        let (g, pi) = bellman_apply(&v, &mu, &cm).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (g2, pi2) = bellman_apply(&shifted, &mu, &cm).unwrap();
        for (a, b) in g.iter().zip(&g2) {
            prop_assert!((a + c - b).abs() <= 1e-12 * (1.0 + a.abs() + c.abs()));
        }
        for (r1, r2) in pi.rows().zip(pi2.rows()) {
            for (p, q) in r1.iter().zip(r2) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn bellman_policies_are_stochastic_and_positive((cm, v, _, mu) in model_with_inputs()) {
        let (_, pi) = bellman_apply(&v, &mu, &cm).unwrap();
        assert_row_stochastic(&pi)?;
        prop_assert!(pi.rows().flatten().all(|p| *p > 0.0));
    }

    #[test]
    fn forward_step_preserves_the_simplex(
        (pi, mu) in (1usize..8).prop_flat_map(|m| (policy_strategy(m), sparse_dist_strategy(m)))
    ) {
        assert_row_stochastic(&pi)?;
        let out = forward_step(&pi, &mu).unwrap();
        prop_assert!((out.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(out.probs().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn sdsue_residual_of_invariant_distribution(
        pi in (1usize..8).prop_flat_map(policy_strategy)
    ) {
        let mu = stationary_distribution(&pi).unwrap();
        prop_assert!(sdsue_check(&mu, &pi).unwrap() <= 1e-12);
    }

    #[test]
    fn sdsue_check_is_the_invariance_residual(
        (pi, mu) in (1usize..8).prop_flat_map(|m| (policy_strategy(m), dist_strategy(m)))
    ) {
        let expected = dist_distance(&forward_step(&pi, &mu).unwrap(), &mu).unwrap();
        prop_assert_eq!(sdsue_check(&mu, &pi).unwrap(), expected);
    }

    #[test]
    fn fifo_and_non_negative_delay((spec, mu) in bottleneck_strategy()) {
        let delays = spec.delays(&mu).unwrap();
        prop_assert!(delays.iter().all(|t| *t >= 0.0));
        let exits: Vec<f64> = delays
            .iter()
            .enumerate()
            .map(|(s, t)| spec.departure_hours(s) + t)
            .collect();
        for w in exits.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "overtaking: {} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn no_queue_below_capacity((spec, mu) in bottleneck_strategy()) {
        let cb = spec.normalized_capacity();
        if mu.probs().iter().all(|p| *p <= cb) {
            prop_assert!(spec.delays(&mu).unwrap().iter().all(|t| *t == 0.0));
        }
    }

    #[test]
    fn bottleneck_cost_is_lipschitz(
        (spec, mu, other) in bottleneck_strategy()
            .prop_flat_map(|(spec, mu)| {
                let m = spec.slices;
                (Just(spec), Just(mu), sparse_dist_strategy(m))
            })
    ) {
        // every cumulative sum moves by at most M d_f, the delay by twice that
        let k = (spec.alpha + spec.beta.max(spec.gamma)) * 2.0 * spec.window / spec.normalized_capacity();
        let d = dist_distance(&mu, &other).unwrap();
        let (f, g) = (spec.costs(&mu).unwrap(), spec.costs(&other).unwrap());
        for (a, b) in f.iter().zip(&g) {
            prop_assert!((a - b).abs() <= k * d + 1e-9, "|{} - {}| > {} * {}", a, b, k, d);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn best_response_beats_perturbations(
        (cm, mus, mu0, noise) in (2usize..5, 1usize..5).prop_flat_map(|(m, n)| {
            (
                synthetic(m),
                prop::collection::vec(dist_strategy(m), n),
                dist_strategy(m),
                prop::collection::vec(prop::collection::vec(dist_strategy(m), m), n),
            )
        })
    ) {
        let mu = MeanFieldSeq::new(mus).unwrap();
        let (_, best) = backward_induction(&mu, &cm).unwrap();
        for p in best.days() {
            assert_row_stochastic(p)?;
        }
        // mix the optimum with a random policy
        let perturbed = PolicySeq::new(
            best.days()
                .iter()
                .zip(&noise)
                .map(|(p, rows)| {
                    Policy::from_rows(
                        p.rows()
                            .zip(rows)
                            .map(|(r, q)| r.iter().zip(q.probs()).map(|(a, b)| 0.7 * a + 0.3 * b).collect())
                            .collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let j_best = total_cost(&best, &mu, &cm, &mu0).unwrap();
        let j_other = total_cost(&perturbed, &mu, &cm, &mu0).unwrap();
        prop_assert!(j_best <= j_other + 1e-9, "{} > {}", j_best, j_other);
    }

    #[test]
    fn path_cost_grows_with_own_share(mu in dist_strategy(6), s in 0usize..6, bump in 0.01..0.5f64) {
        let net = RoadNetwork::grid9();
        // raise mu(s) and shrink the others proportionally
        let probs: Vec<f64> = mu
            .probs()
            .iter()
            .enumerate()
            .map(|(x, p)| if x == s { p + bump * (1.0 - p) } else { p * (1.0 - bump) })
            .collect();
        let raised = Distribution::new(probs).unwrap();
        prop_assert!(net.path_cost(s, &raised).unwrap() >= net.path_cost(s, &mu).unwrap() - 1e-12);
    }
}

fn synthetic(m: usize) -> impl Strategy<Value = Synthetic> {
    common::synthetic_strategy(m)
}
