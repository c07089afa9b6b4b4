use proptest::prelude::*;

use polfront_core::direct::softmax;
use polfront_core::evaluation::{dominates, evaluate_decisions, PolicyEval};
use polfront_core::indirect::reward_max_choice;
use polfront_core::{build_rewards, parse_cohort, write_cohort, ActionSet, Cohort, Decision, Matrix, RewardSpec};

fn eval(iat: f64, cost: f64) -> PolicyEval {
    PolicyEval {
        n: 1,
        n_decided: 1,
        iat_rate: iat,
        cost_rate: cost,
        defer_rate: 0.0,
        bootstrap: None,
    }
}

// coarse grid so ties actually occur
fn point() -> impl Strategy<Value = PolicyEval> {
    (0u8..5, 0u8..5).prop_map(|(a, b)| eval(f64::from(a) / 4.0, f64::from(b) / 4.0))
}

fn cohort_strategy() -> impl Strategy<Value = (Cohort, ActionSet)> {
    (2usize..5, 1usize..40).prop_flat_map(|(k, n)| {
        (
            Just(k),
            Just(n),
            proptest::collection::vec(-3.0f64..3.0, n * 2),
            proptest::collection::vec(0u8..2, n * k),
            proptest::collection::vec(0usize..k, n),
        )
            .prop_map(|(k, n, x, y, doc)| {
                let pairs: Vec<(String, f64)> = (0..k).map(|a| (format!("a{a}"), f64::from(u8::from(a >= k / 2)))).collect();
                let refs: Vec<(&str, f64)> = pairs.iter().map(|(l, c)| (l.as_str(), *c)).collect();
                let actions = ActionSet::from_pairs(&refs).unwrap();
                let cohort = Cohort::new(
                    (0..n).map(|i| format!("u{i}")).collect(),
                    vec!["f1".into(), "f2".into()],
                    actions.labels(),
                    Matrix::new(n, 2, x).unwrap(),
                    y,
                    Some(doc),
                )
                .unwrap();
                (cohort, actions)
            })
    })
}

proptest! {
    #[test]
    fn dominance_is_strict_partial_order(p in point(), q in point(), r in point()) {
        prop_assert!(!dominates(&p, &p));
        prop_assert!(!(dominates(&p, &q) && dominates(&q, &p)));
        if dominates(&p, &q) && dominates(&q, &r) {
            prop_assert!(dominates(&p, &r));
        }
    }

    #[test]
    fn bootstrap_mean_near_point_estimate((cohort, actions) in cohort_strategy(), seed in any::<u64>()) {
        let decisions: Vec<Decision> = (0..cohort.n()).map(|i| Decision::Act(i % actions.len())).collect();
        let e = evaluate_decisions(&cohort, &actions, &decisions, 20, seed).unwrap();
        let b = e.bootstrap.clone().unwrap();
        // 20 resamples: the mean sits within a few standard errors of the point
        prop_assert!((b.mean.iat_rate - e.iat_rate).abs() <= 3.0 * b.sd.iat_rate + 1e-12);
        prop_assert!((b.mean.cost_rate - e.cost_rate).abs() <= 3.0 * b.sd.cost_rate + 1e-12);
        prop_assert!(b.sd.iat_rate >= 0.0 && b.sd.cost_rate >= 0.0);
    }

    #[test]
    fn choices_ignore_common_shifts(
        preds in proptest::collection::vec(0.0f64..1.0, 4),
        shift in -0.5f64..0.5,
        omega in 0.0f64..=1.0,
    ) {
        let costs = [0.0, 0.0, 1.0, 1.0];
        let shifted: Vec<f64> = preds.iter().map(|p| p + shift).collect();
        let (a, b) = (reward_max_choice(&preds, omega, &costs), reward_max_choice(&shifted, omega, &costs));
        // equal unless the shift only moved a near-tie
        let scores: Vec<f64> = (0..4).map(|i| omega * preds[i] + (1.0 - omega) * (1.0 - costs[i])).collect();
        if (scores[a] - scores[b]).abs() > 1e-9 {
            prop_assert_eq!(a, b);
        }
        let s = softmax(&preds);
        let t = softmax(&shifted);
        for (u, v) in s.iter().zip(&t) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_deferral_monotone_in_lambda(
        (cohort, actions) in cohort_strategy(),
        omega in 0.0f64..=1.0,
        l1 in 0.0f64..0.2,
        dl in 0.0f64..0.2,
    ) {
        let lo = build_rewards(&cohort, &actions, &RewardSpec::new(omega, l1).unwrap().with_defer_column()).unwrap();
        let hi = build_rewards(&cohort, &actions, &RewardSpec::new(omega, l1 + dl).unwrap().with_defer_column()).unwrap();
        let k = actions.len();
        let defers = |row: &[f64]| row[k] > row[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut n_lo = 0;
        let mut n_hi = 0;
        for i in 0..cohort.n() {
            let (a, b) = (defers(lo.row(i)), defers(hi.row(i)));
            prop_assert!(!a || b, "unit {} stopped deferring", i);
            n_lo += usize::from(a);
            n_hi += usize::from(b);
            prop_assert!(hi.row(i)[k] >= lo.row(i)[k]);
        }
        prop_assert!(n_hi >= n_lo);
    }

    #[test]
    fn cohort_csv_round_trip((cohort, actions) in cohort_strategy()) {
        let mut buf = Vec::new();
        write_cohort(&mut buf, &cohort).unwrap();
        let back = parse_cohort(buf.as_slice(), &actions).unwrap();
        prop_assert_eq!(&back.cohort, &cohort);
    }
}
