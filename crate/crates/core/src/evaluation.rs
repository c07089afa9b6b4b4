//! Realized-outcome metrics, bootstrap summaries and frontier assembly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::exec;
use crate::policy::{decide_all, Decision, Policy};
use crate::seed::derive_seed;

/// Number of bootstrap resamples used when none is configured.
pub const DEFAULT_BOOTSTRAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub iat_rate: f64,
    pub cost_rate: f64,
    pub defer_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub mean: Rates,
    pub sd: Rates,
}

/// Inappropriate-treatment rate, mean cost and deferral rate of a set of decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub n: usize,
    pub n_decided: usize,
    pub iat_rate: f64,
    pub cost_rate: f64,
    pub defer_rate: f64,
    pub bootstrap: Option<BootstrapSummary>,
}

impl PolicyEval {
    pub fn rates(&self) -> Rates {
        Rates {
            iat_rate: self.iat_rate,
            cost_rate: self.cost_rate,
            defer_rate: self.defer_rate,
        }
    }

    pub fn iat_sd(&self) -> Option<f64> {
        self.bootstrap.as_ref().map(|b| b.sd.iat_rate)
    }

    pub fn cost_sd(&self) -> Option<f64> {
        self.bootstrap.as_ref().map(|b| b.sd.cost_rate)
    }
}

struct UnitOutcomes {
    iat: Vec<f64>,
    cost: Vec<f64>,
    deferred: Vec<bool>,
}

fn mean_rates(u: &UnitOutcomes, idx: impl Iterator<Item = usize>) -> Rates {
    let (mut iat, mut cost, mut def, mut n) = (0.0, 0.0, 0usize, 0usize);
    for i in idx {
        iat += u.iat[i];
        cost += u.cost[i];
        def += usize::from(u.deferred[i]);
        n += 1;
    }
    let n = n.max(1) as f64;
    Rates {
        iat_rate: iat / n,
        cost_rate: cost / n,
        defer_rate: def as f64 / n,
    }
}

fn summarize(u: &UnitOutcomes, n_bootstrap: usize, seed: u64) -> PolicyEval {
    let n = u.iat.len();
    let point = mean_rates(u, 0..n);
    let bootstrap = (n_bootstrap > 0 && n > 0).then(|| {
        let samples = exec::map_range(n_bootstrap, |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bootstrap", b as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            mean_rates(u, idx.into_iter())
        });
        let b = samples.len() as f64;
        let mean = Rates {
            iat_rate: samples.iter().map(|r| r.iat_rate).sum::<f64>() / b,
            cost_rate: samples.iter().map(|r| r.cost_rate).sum::<f64>() / b,
            defer_rate: samples.iter().map(|r| r.defer_rate).sum::<f64>() / b,
        };
        let sd_of = |f: fn(&Rates) -> f64, m: f64| {
            if samples.len() < 2 {
                0.0
            } else {
                (samples.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (b - 1.0)).sqrt()
            }
        };
        let sd = Rates {
            iat_rate: sd_of(|r| r.iat_rate, mean.iat_rate),
            cost_rate: sd_of(|r| r.cost_rate, mean.cost_rate),
            defer_rate: sd_of(|r| r.defer_rate, mean.defer_rate),
        };
        BootstrapSummary {
            resamples: n_bootstrap,
            mean,
            sd,
        }
    });
    PolicyEval {
        n,
        n_decided: u.deferred.iter().filter(|d| !**d).count(),
        iat_rate: point.iat_rate,
        cost_rate: point.cost_rate,
        defer_rate: point.defer_rate,
        bootstrap,
    }
}

fn realize(cohort: &Cohort, actions: &ActionSet, decisions: &[Decision]) -> Result<UnitOutcomes> {
    if decisions.len() != cohort.n() {
        return Err(Error::Shape {
            expected: cohort.n(),
            found: decisions.len(),
        });
    }
    let k = actions.len();
    let doctor = cohort.doctor_action();
    let mut out = UnitOutcomes {
        iat: Vec::with_capacity(cohort.n()),
        cost: Vec::with_capacity(cohort.n()),
        deferred: Vec::with_capacity(cohort.n()),
    };
    for (i, d) in decisions.iter().enumerate() {
        let (a, deferred) = match *d {
            Decision::Act(a) if a < k => (a, false),
            Decision::Act(a) => {
                return Err(Error::Shape {
                    expected: k,
                    found: a + 1,
                })
            }
            Decision::Defer => match doctor {
                Some(doc) => (doc[i], true),
                None => return Err(Error::Config("deferral needs a doctor_action column".into())),
            },
        };
        out.iat.push(1.0 - f64::from(cohort.y(i, a)));
        out.cost.push(actions.cost(a));
        out.deferred.push(deferred);
    }
    Ok(out)
}

/// Evaluates explicit decisions; deferred units realize the clinician's outcome.
pub fn evaluate_decisions(
    cohort: &Cohort,
    actions: &ActionSet,
    decisions: &[Decision],
    n_bootstrap: usize,
    seed: u64,
) -> Result<PolicyEval> {
    cohort.check_actions(actions)?;
    Ok(summarize(&realize(cohort, actions, decisions)?, n_bootstrap, seed))
}

fn check_policy<P: Policy + ?Sized>(policy: &P, cohort: &Cohort, actions: &ActionSet) -> Result<()> {
    cohort.check_actions(actions)?;
    let expected = actions.len() + usize::from(policy.defer_index().is_some());
    if policy.n_choices() != expected {
        return Err(Error::Schema(format!(
            "policy has {} choices, action set implies {expected}",
            policy.n_choices()
        )));
    }
    if policy.defer_index().is_some() && cohort.doctor_action().is_none() {
        return Err(Error::Config("deferring policy needs a doctor_action column".into()));
    }
    Ok(())
}

/// Applies `policy` to `cohort` and evaluates it.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    cohort: &Cohort,
    actions: &ActionSet,
    n_bootstrap: usize,
    seed: u64,
) -> Result<PolicyEval> {
    check_policy(policy, cohort, actions)?;
    let decisions = decide_all(policy, cohort.x())?;
    evaluate_decisions(cohort, actions, &decisions, n_bootstrap, seed)
}

/// Rates realized by the recorded clinician actions.
pub fn doctor_eval(cohort: &Cohort, actions: &ActionSet, n_bootstrap: usize, seed: u64) -> Result<PolicyEval> {
    let doctor = cohort
        .doctor_action()
        .ok_or_else(|| Error::Config("cohort has no doctor_action column".into()))?;
    let decisions: Vec<Decision> = doctor.iter().map(|&a| Decision::Act(a)).collect();
    evaluate_decisions(cohort, actions, &decisions, n_bootstrap, seed)
}

/// Doctor-versus-policy comparison on the units where the policy acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecisionCohort {
    /// The policy deferred on every unit.
    Empty { n: usize, defer_rate: f64 },
    Paired {
        defer_rate: f64,
        n_decided: usize,
        doctor: PolicyEval,
        policy: PolicyEval,
    },
}

impl DecisionCohort {
    pub fn defer_rate(&self) -> f64 {
        match self {
            Self::Empty { defer_rate, .. } | Self::Paired { defer_rate, .. } => *defer_rate,
        }
    }
}

pub fn decision_cohort_analysis<P: Policy + ?Sized>(
    policy: &P,
    cohort: &Cohort,
    actions: &ActionSet,
) -> Result<DecisionCohort> {
    check_policy(policy, cohort, actions)?;
    let doctor = cohort
        .doctor_action()
        .ok_or_else(|| Error::Config("decision-cohort analysis needs a doctor_action column".into()))?;
    let decisions = decide_all(policy, cohort.x())?;
    let decided: Vec<usize> = (0..cohort.n())
        .filter(|&i| matches!(decisions[i], Decision::Act(_)))
        .collect();
    let n = cohort.n();
    let defer_rate = if n == 0 { 0.0 } else { (n - decided.len()) as f64 / n as f64 };
    if decided.is_empty() {
        return Ok(DecisionCohort::Empty { n, defer_rate });
    }
    let sub = cohort.subset(&decided);
    let own: Vec<Decision> = decided.iter().map(|&i| decisions[i]).collect();
    let doc: Vec<Decision> = decided.iter().map(|&i| Decision::Act(doctor[i])).collect();
    Ok(DecisionCohort::Paired {
        defer_rate,
        n_decided: decided.len(),
        doctor: evaluate_decisions(&sub, actions, &doc, 0, 0)?,
        policy: evaluate_decisions(&sub, actions, &own, 0, 0)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierMethod {
    Thresholding,
    RewardMax,
    Direct,
    Baseline,
    Doctor,
}

impl FrontierMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Thresholding => "thresholding",
            Self::RewardMax => "reward-max",
            Self::Direct => "direct",
            Self::Baseline => "baseline",
            Self::Doctor => "doctor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub method: FrontierMethod,
    /// Omega, budget or deferral bonus, depending on the method.
    pub param: Option<f64>,
    /// Free-form qualifier for points without a numeric parameter.
    #[serde(default)]
    pub variant: Option<String>,
    pub eval: PolicyEval,
    #[serde(default)]
    pub policy_ref: Option<String>,
}

impl FrontierPoint {
    pub fn param_label(&self) -> String {
        match (self.param, &self.variant) {
            (Some(p), _) => format!("{p}"),
            (None, Some(v)) => v.clone(),
            (None, None) => String::new(),
        }
    }
}

/// `p` is no worse on both rates and strictly better on one.
pub fn dominates(p: &PolicyEval, q: &PolicyEval) -> bool {
    p.iat_rate <= q.iat_rate && p.cost_rate <= q.cost_rate && (p.iat_rate < q.iat_rate || p.cost_rate < q.cost_rate)
}

/// `p` is no worse than `q` on both rates.
pub fn weakly_dominates(p: &PolicyEval, q: &PolicyEval) -> bool {
    p.iat_rate <= q.iat_rate && p.cost_rate <= q.cost_rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    #[serde(flatten)]
    pub point: FrontierPoint,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierReport {
    pub rows: Vec<FrontierRow>,
}

pub const FRONTIER_CSV_HEADER: &str = "method,param,iat,iat_sd,cost,cost_sd,defer_rate,dominated";

/// Sorts points by IAT (then cost) and flags every point dominated by another.
pub fn assemble_frontier(points: Vec<FrontierPoint>) -> FrontierReport {
    let flags: Vec<bool> = points
        .iter()
        .map(|q| points.iter().any(|p| dominates(&p.eval, &q.eval)))
        .collect();
    let mut rows: Vec<FrontierRow> = points
        .into_iter()
        .zip(flags)
        .map(|(point, dominated)| FrontierRow { point, dominated })
        .collect();
    rows.sort_by(|a, b| {
        a.point
            .eval
            .iat_rate
            .total_cmp(&b.point.eval.iat_rate)
            .then(a.point.eval.cost_rate.total_cmp(&b.point.eval.cost_rate))
    });
    FrontierReport { rows }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl FrontierReport {
    pub fn points_for(&self, method: FrontierMethod) -> impl Iterator<Item = &FrontierRow> {
        self.rows.iter().filter(move |r| r.point.method == method)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(FRONTIER_CSV_HEADER.split(','))?;
        for r in &self.rows {
            let e = &r.point.eval;
            w.write_record([
                r.point.method.as_str().to_string(),
                r.point.param_label(),
                format!("{}", e.iat_rate),
                opt(e.iat_sd()),
                format!("{}", e.cost_rate),
                opt(e.cost_sd()),
                format!("{}", e.defer_rate),
                r.dominated.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::policy::ConstantPolicy;

    fn actions() -> ActionSet {
        ActionSet::from_pairs(&[("A", 0.0), ("B", 1.0)]).unwrap()
    }

    fn cohort() -> Cohort {
        // y rows: (1,0) (0,1) (1,1) (0,0); doctor picks 0,1,1,0
        Cohort::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec!["f".into()],
            vec!["A".into(), "B".into()],
            Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
            vec![1, 0, 0, 1, 1, 1, 0, 0],
            Some(vec![0, 1, 1, 0]),
        )
        .unwrap()
    }

    struct AlwaysDefer;
    impl Policy for AlwaysDefer {
        fn n_features(&self) -> usize {
            1
        }
        fn n_choices(&self) -> usize {
            3
        }
        fn defer_index(&self) -> Option<usize> {
            Some(2)
        }
        fn decide(&self, _x: &[f64]) -> usize {
            2
        }
    }

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

    #[test]
    fn doctor_hand_arithmetic() {
        let e = doctor_eval(&cohort(), &actions(), 0, 0).unwrap();
        // realized y: 1, 1, 1, 0
        assert_eq!(e.iat_rate, 0.25);
        assert_eq!(e.cost_rate, 0.5);
        assert!(e.bootstrap.is_none());
    }

    #[test]
    fn always_defer_matches_doctor() {
        let d = doctor_eval(&cohort(), &actions(), 20, 5).unwrap();
        let p = evaluate_policy(&AlwaysDefer, &cohort(), &actions(), 20, 5).unwrap();
        assert_eq!(p.iat_rate, d.iat_rate);
        assert_eq!(p.cost_rate, d.cost_rate);
        assert_eq!(p.defer_rate, 1.0);
        assert_eq!(p.n_decided, 0);
        assert_eq!(p.bootstrap.as_ref().unwrap().mean.iat_rate, d.bootstrap.unwrap().mean.iat_rate);
        let dc = decision_cohort_analysis(&AlwaysDefer, &cohort(), &actions()).unwrap();
        assert_eq!(dc, DecisionCohort::Empty { n: 4, defer_rate: 1.0 });
    }

    #[test]
    fn defer_without_doctor_is_config_error() {
        let c = cohort();
        let bare = Cohort::new(
            c.ids().to_vec(),
            c.feature_names().to_vec(),
            c.action_labels().to_vec(),
            c.x().clone(),
            (0..4).flat_map(|i| c.y_row(i).to_vec()).collect(),
            None,
        )
        .unwrap();
        assert!(matches!(
            evaluate_policy(&AlwaysDefer, &bare, &actions(), 0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constant_policy_rates() {
        let p = ConstantPolicy {
            action: 1,
            n_features: 1,
            n_actions: 2,
        };
        let e = evaluate_policy(&p, &cohort(), &actions(), 0, 0).unwrap();
        assert_eq!(e.iat_rate, 0.5);
        assert_eq!(e.cost_rate, 1.0);
        assert_eq!(e.n_decided, 4);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let p = ConstantPolicy {
            action: 0,
            n_features: 1,
            n_actions: 2,
        };
        let a = evaluate_policy(&p, &cohort(), &actions(), 20, 1).unwrap();
        let b = evaluate_policy(&p, &cohort(), &actions(), 20, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bootstrap.unwrap().resamples, 20);
    }

    #[test]
    fn dominance_cases() {
        let report = assemble_frontier(vec![
            FrontierPoint {
                method: FrontierMethod::Direct,
                param: Some(0.9),
                variant: None,
                eval: eval(0.12, 0.35),
                policy_ref: None,
            },
            FrontierPoint {
                method: FrontierMethod::Direct,
                param: Some(0.95),
                variant: None,
                eval: eval(0.10, 0.30),
                policy_ref: None,
            },
        ]);
        assert_eq!(report.rows[0].point.eval.iat_rate, 0.10);
        assert!(!report.rows[0].dominated);
        assert!(report.rows[1].dominated);
        assert!(!dominates(&eval(0.1, 0.2), &eval(0.1, 0.2)));
        let chain = [eval(0.1, 0.5), eval(0.2, 0.3), eval(0.3, 0.1)];
        for p in &chain {
            assert!(chain.iter().all(|q| !dominates(q, p)));
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let report = assemble_frontier(vec![FrontierPoint {
            method: FrontierMethod::Doctor,
            param: None,
            variant: None,
            eval: eval(0.25, 0.5),
            policy_ref: None,
        }]);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), FRONTIER_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "doctor,,0.25,,0.5,,0,false");
    }
}
