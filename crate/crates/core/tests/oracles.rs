use std::sync::Arc;

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

use polfront_core::evaluation::evaluate_decisions;
use polfront_core::indirect::{reward_max_choice, RewardMaxPolicy};
use polfront_core::outcome::{default_outcome_optimizer, fit_outcome_models, sigmoid, TuningPlan};
use polfront_core::seed::derive_seed;
use polfront_core::synthetic::{bayes_value, generate, simulate_clinician, ClinicianRule, ClinicianSim, SyntheticSpec};
use polfront_core::{apply_policy, ActionSet, Cohort, Decision, Matrix};

/// Bayes value on the non-uniform subset when the nonlinear terms vanish.
/// With `g = 0`, `E[prod sigmoid(X_a)] = 1/8`, so the non-uniform mass is 3/4
/// and the value is `(E[sigmoid(max X)] - 1/8) / (3/4)`, where `max X` has
/// density `3 phi(t) Phi(t)^2`.
fn linear_bayes_quadrature() -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (lo, hi, steps) = (-10.0, 10.0, 20_000);
    let h = (hi - lo) / steps as f64;
    let f = |t: f64| sigmoid(t) * 3.0 * normal.pdf(t) * normal.cdf(t).powi(2);
    // Simpson's rule
    let mut s = f(lo) + f(hi);
    for i in 1..steps {
        let t = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    let e_max = s * h / 3.0;
    (e_max - 0.125) / 0.75
}

#[test]
fn monte_carlo_bayes_value_matches_quadrature() {
    let exact = linear_bayes_quadrature();
    let mc = bayes_value(&SyntheticSpec::linear_only(5, 0), 200_000, 17).unwrap();
    assert!(
        (mc.mean - exact).abs() < 3.0 * mc.std_error,
        "mc {} +- {} vs quadrature {exact}",
        mc.mean,
        mc.std_error
    );
    // non-uniform share should be near 3/4
    assert!((mc.n as f64 / 200_000.0 - 0.75).abs() < 0.01);
}

#[test]
fn fully_noisy_clinician_is_uniform() {
    let cohort = generate(&SyntheticSpec::linear_only(3, 2), 30_000).unwrap();
    let sim = ClinicianSim {
        rule: ClinicianRule::Fixed { action: 0 },
        noise_rate: 1.0,
        seed: 9,
    };
    let cohort = simulate_clinician(&sim, cohort).unwrap();
    let mut counts = [0f64; 3];
    for &a in cohort.doctor_action().unwrap() {
        counts[a] += 1.0;
    }
    let expected = cohort.n() as f64 / 3.0;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

#[test]
fn outcome_draws_match_probabilities() {
    // Y(0) frequency in bins of sigmoid(x_0) against the bin's mean probability
    let spec = SyntheticSpec::linear_only(3, 4);
    let cohort = generate(&spec, 50_000).unwrap();
    let mut bins = [(0.0f64, 0.0f64, 0.0f64); 5];
    for i in 0..cohort.n() {
        let p = spec.probability(cohort.x().row(i), 0);
        let b = ((p * 5.0) as usize).min(4);
        bins[b].0 += f64::from(cohort.y(i, 0));
        bins[b].1 += p;
        bins[b].2 += p * (1.0 - p);
    }
    let mut stat = 0.0;
    for (obs, exp, var) in bins {
        stat += (obs - exp).powi(2) / var;
    }
    let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

#[test]
fn derived_seeds_avalanche() {
    let mut total = 0u32;
    let pairs = 1000;
    for i in 0..pairs {
        let a = derive_seed(42, "stream", i);
        let b = derive_seed(42, "stream", i + 1);
        let d = (a ^ b).count_ones();
        assert!(d > 0);
        total += d;
    }
    let mean = total as f64 / pairs as f64;
    assert!((mean - 32.0).abs() < 1.5, "mean Hamming distance {mean}");
    assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
}

#[test]
fn binned_log_odds_increase_with_own_feature() {
    let cohort = generate(&SyntheticSpec::linear_only(3, 6), 40_000).unwrap();
    for a in 0..3 {
        let mut order: Vec<usize> = (0..cohort.n()).collect();
        order.sort_by(|&i, &j| cohort.x().get(i, a).total_cmp(&cohort.x().get(j, a)));
        let logits: Vec<f64> = order
            .chunks(cohort.n() / 5)
            .map(|c| {
                let p = c.iter().map(|&i| f64::from(cohort.y(i, a))).sum::<f64>() / c.len() as f64;
                (p / (1.0 - p)).ln()
            })
            .collect();
        assert!(logits.windows(2).all(|w| w[0] < w[1]), "action {a}: {logits:?}");
    }
}

fn toy_cohort() -> (Cohort, ActionSet) {
    let actions = ActionSet::from_pairs(&[("N", 0.0), ("C", 1.0)]).unwrap();
    // (y_N, y_C, doctor)
    let units = [
        (1, 1, 0),
        (1, 0, 0),
        (0, 1, 1),
        (0, 1, 0),
        (0, 0, 1),
        (1, 1, 1),
        (0, 1, 1),
        (1, 0, 0),
        (1, 1, 0),
        (0, 1, 1),
    ];
    let n = units.len();
    let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
    let y = units.iter().flat_map(|u| [u.0, u.1]).collect();
    let doctor = units.iter().map(|u| u.2).collect();
    let cohort = Cohort::new(
        (0..n).map(|i| format!("u{i}")).collect(),
        vec!["x".into()],
        actions.labels(),
        x,
        y,
        Some(doctor),
    )
    .unwrap();
    (cohort, actions)
}

#[test]
fn oracle_policy_on_toy() {
    let (cohort, actions) = toy_cohort();
    // oracle: cheapest effective action, N when nothing works
    let decisions: Vec<Decision> = (0..cohort.n())
        .map(|i| Decision::Act(if cohort.y(i, 0) == 1 || cohort.y(i, 1) == 0 { 0 } else { 1 }))
        .collect();
    let eval = evaluate_decisions(&cohort, &actions, &decisions, 0, 0).unwrap();
    // only unit 4 has no effective action
    assert_eq!(eval.iat_rate, 0.1);
    // units 2, 3, 6, 9 need C
    assert_eq!(eval.cost_rate, 0.4);

    // deferring everywhere reproduces the clinician
    let defer = vec![Decision::Defer; cohort.n()];
    let eval = evaluate_decisions(&cohort, &actions, &defer, 0, 0).unwrap();
    // the clinician fails on units 3 and 4 and prescribes C five times
    assert_eq!(eval.iat_rate, 0.2);
    assert_eq!(eval.cost_rate, 0.5);
    assert_eq!(eval.defer_rate, 1.0);
    assert_eq!(eval.n_decided, 0);
}

#[test]
fn reward_max_predicted_benefit_monotone_in_omega() {
    let spec = SyntheticSpec::linear_only(4, 8);
    let train = generate(&spec, 2000).unwrap();
    let actions = ActionSet::from_pairs(&[("A1", 0.0), ("A2", 1.0), ("A3", 1.0)]).unwrap();
    let plan = TuningPlan {
        n_splits: 2,
        ..TuningPlan::default()
    };
    let models = Arc::new(fit_outcome_models(&train, &actions, &plan, &default_outcome_optimizer()).unwrap());
    let preds = models.predict(train.x()).unwrap();
    let costs = actions.costs();
    let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for step in 0..=20 {
        let omega = step as f64 / 20.0;
        let (mut benefit, mut cost) = (0.0, 0.0);
        for row in preds.iter_rows() {
            let a = reward_max_choice(row, omega, &costs);
            benefit += row[a];
            cost += costs[a];
        }
        assert!(benefit >= last.0 - 1e-9, "benefit fell at omega {omega}");
        assert!(cost >= last.1 - 1e-9, "cost fell at omega {omega}");
        last = (benefit, cost);
    }
    let policy = RewardMaxPolicy {
        models,
        omega: 0.0,
        actions: actions.clone(),
    };
    assert!(apply_policy(&policy, train.x()).unwrap().iter().all(|&a| a == 0));
}
