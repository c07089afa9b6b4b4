//! Single-policy comparison baselines: lowest predicted resistance, and the
//! same rule with per-action cost offsets calibrated to match target counts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::actions::{argmin, ActionSet};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::outcome::OutcomeModels;
use crate::policy::Policy;

/// `argmin_a (1 - f_a(x))` from effectiveness predictions.
pub fn unconstrained_choice(effectiveness: &[f64]) -> usize {
    let resistance: Vec<f64> = effectiveness.iter().map(|p| 1.0 - p).collect();
    argmin(&resistance)
}

/// `argmin_a (1 - f_a(x) + c_a)`.
pub fn constrained_choice(effectiveness: &[f64], offsets: &[f64]) -> usize {
    let scores: Vec<f64> = effectiveness
        .iter()
        .zip(offsets)
        .map(|(p, c)| 1.0 - p + c)
        .collect();
    argmin(&scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedPolicy {
    pub models: Arc<OutcomeModels>,
    pub actions: ActionSet,
}

impl Policy for UnconstrainedPolicy {
    fn n_features(&self) -> usize {
        self.models.n_features()
    }
    fn n_choices(&self) -> usize {
        self.actions.len()
    }
    fn decide(&self, x: &[f64]) -> usize {
        let mut p = vec![0.0; self.models.len()];
        self.models.predict_row(x, &mut p);
        unconstrained_choice(&p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedPolicy {
    pub models: Arc<OutcomeModels>,
    pub actions: ActionSet,
    pub costs: CalibratedCosts,
}

impl Policy for ConstrainedPolicy {
    fn n_features(&self) -> usize {
        self.models.n_features()
    }
    fn n_choices(&self) -> usize {
        self.actions.len()
    }
    fn decide(&self, x: &[f64]) -> usize {
        let mut p = vec![0.0; self.models.len()];
        self.models.predict_row(x, &mut p);
        constrained_choice(&p, &self.costs.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub iteration: usize,
    pub counts: Vec<usize>,
    pub max_deviation: usize,
}

/// Per-action score offsets and how they were found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedCosts {
    pub c: Vec<f64>,
    pub alpha: f64,
    pub max_iters: usize,
    pub tolerance: usize,
    pub converged: bool,
    /// Iteration whose offsets were returned.
    pub iteration: usize,
    pub trace: Vec<CalibrationStep>,
}

impl CalibratedCosts {
    pub fn zero(k: usize) -> Self {
        Self {
            c: vec![0.0; k],
            alpha: 0.0,
            max_iters: 0,
            tolerance: 0,
            converged: true,
            iteration: 0,
            trace: Vec::new(),
        }
    }
}

/// `ceil(0.02 * n)`.
pub fn default_tolerance(n: usize) -> usize {
    (n * 2).div_ceil(100)
}

/// Target counts from the cohort's recorded clinician actions.
pub fn doctor_counts(cohort: &Cohort) -> Result<Vec<usize>> {
    let d = cohort
        .doctor_action()
        .ok_or_else(|| Error::Config("cohort has no doctor_action column".into()))?;
    let mut counts = vec![0; cohort.n_actions()];
    for &a in d {
        counts[a] += 1;
    }
    Ok(counts)
}

/// One step of `c_a += alpha * (count_a - target_a)`.
pub fn update_offsets(c: &mut [f64], counts: &[usize], targets: &[usize], alpha: f64) {
    for ((ca, &n), &t) in c.iter_mut().zip(counts).zip(targets) {
        *ca += alpha * (n as f64 - t as f64);
    }
}

/// Iterates `c_a += alpha * (count_a - target_a)` until every count is within
/// `tolerance` of its target. Returns the best offsets seen if `max_iters`
/// updates do not get there.
pub fn calibrate_costs(
    predictions: &Matrix,
    target_counts: &[usize],
    alpha: f64,
    max_iters: usize,
    tolerance: usize,
) -> Result<CalibratedCosts> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let k = predictions.cols();
    if target_counts.len() != k {
        return Err(Error::Config("one target count per action required".into()));
    }
    if target_counts.iter().sum::<usize>() != predictions.rows() {
        return Err(Error::Config("target counts must sum to the cohort size".into()));
    }
    let mut c = vec![0.0; k];
    let mut trace = Vec::new();
    let mut best: Option<(usize, Vec<f64>, usize)> = None;
    for iteration in 0..=max_iters {
        let mut counts = vec![0usize; k];
        for row in predictions.iter_rows() {
            counts[constrained_choice(row, &c)] += 1;
        }
        let max_deviation = counts
            .iter()
            .zip(target_counts)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0);
        trace.push(CalibrationStep {
            iteration,
            counts: counts.clone(),
            max_deviation,
        });
        if best.as_ref().is_none_or(|(d, _, _)| max_deviation < *d) {
            best = Some((max_deviation, c.clone(), iteration));
        }
        if max_deviation <= tolerance {
            return Ok(CalibratedCosts {
                c,
                alpha,
                max_iters,
                tolerance,
                converged: true,
                iteration,
                trace,
            });
        }
        if iteration == max_iters {
            break;
        }
        update_offsets(&mut c, &counts, target_counts, alpha);
    }
    let (_, c, iteration) = best.expect("at least one iteration ran");
    Ok(CalibratedCosts {
        c,
        alpha,
        max_iters,
        tolerance,
        converged: false,
        iteration,
        trace,
    })
}

/// `g / n`, where `g` is the median per-unit gap between the two highest
/// predictions (1 when that median is zero or there is a single action).
pub fn default_alpha(predictions: &Matrix) -> f64 {
    let n = predictions.rows().max(1) as f64;
    if predictions.cols() < 2 || predictions.rows() == 0 {
        return 1.0 / n;
    }
    let mut gaps: Vec<f64> = predictions
        .iter_rows()
        .map(|r| {
            let mut v = r.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            v[0] - v[1]
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let g = gaps[gaps.len() / 2];
    if g > 0.0 {
        g / n
    } else {
        1.0 / n
    }
}

/// Calibrates offsets for `models` on `cohort`, defaulting to clinician counts,
/// [`default_alpha`], 500 iterations and tolerance `ceil(0.02 n)`.
pub fn calibrate_to_cohort(
    models: &OutcomeModels,
    cohort: &Cohort,
    actions: &ActionSet,
    target_counts: Option<Vec<usize>>,
    alpha: Option<f64>,
    max_iters: Option<usize>,
    tolerance: Option<usize>,
) -> Result<CalibratedCosts> {
    cohort.check_actions(actions)?;
    let targets = match target_counts {
        Some(t) => t,
        None => doctor_counts(cohort)?,
    };
    let n = cohort.n();
    let preds = models.predict(cohort.x())?;
    calibrate_costs(
        &preds,
        &targets,
        alpha.unwrap_or_else(|| default_alpha(&preds)),
        max_iters.unwrap_or(500),
        tolerance.unwrap_or_else(|| default_tolerance(n)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_picks_lowest_resistance() {
        let resist = [0.11, 0.20, 0.06, 0.07];
        let eff: Vec<f64> = resist.iter().map(|r| 1.0 - r).collect();
        assert_eq!(unconstrained_choice(&eff), 2);
        assert_eq!(unconstrained_choice(&[0.4, 0.4, 0.4]), 0);
        assert_eq!(unconstrained_choice(&[0.3]), 0);
    }

    #[test]
    fn constrained_cases() {
        let eff = [0.7, 0.9];
        assert_eq!(constrained_choice(&eff, &[0.0, 0.25]), 0);
        assert_eq!(constrained_choice(&eff, &[0.0, 0.0]), unconstrained_choice(&eff));
        assert_eq!(constrained_choice(&[0.1, 0.99], &[0.0, 1e9]), 0);
        // common shift
        assert_eq!(constrained_choice(&eff, &[3.0, 3.25]), 0);
    }

    #[test]
    fn own_counts_are_a_fixed_point() {
        let p = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.5]], 2).unwrap();
        let c = calibrate_costs(&p, &[2, 1], 0.1, 10, 0).unwrap();
        assert!(c.converged);
        assert_eq!(c.iteration, 0);
        assert_eq!(c.c, vec![0.0, 0.0]);
    }

    #[test]
    fn update_sign_follows_count_excess() {
        // both units prefer action 0
        let p = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.3]], 2).unwrap();
        let c = calibrate_costs(&p, &[1, 1], 0.01, 1, 0).unwrap();
        assert_eq!(c.trace[0].counts, vec![2, 0]);
        assert!(!c.converged);
        let mut off = vec![0.5, 0.5, 0.5];
        update_offsets(&mut off, &[5, 1, 3], &[3, 3, 3], 0.1);
        assert!(off[0] > 0.5 && off[1] < 0.5 && off[2] == 0.5);
    }

    #[test]
    fn rejects_bad_configuration() {
        let p = Matrix::from_rows(&[vec![0.9, 0.1]], 2).unwrap();
        assert!(matches!(calibrate_costs(&p, &[1, 0], 0.0, 5, 0), Err(Error::Config(_))));
        assert!(calibrate_costs(&p, &[2, 0], 0.1, 5, 0).is_err());
    }

    #[test]
    fn tolerance_default() {
        assert_eq!(default_tolerance(100), 2);
        assert_eq!(default_tolerance(101), 3);
        assert_eq!(default_tolerance(0), 0);
    }
}
