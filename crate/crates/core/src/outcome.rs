//! Per-action logistic effectiveness models with validation-split tuning.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::Matrix;
use crate::optim::{minimize, Method, Objective, OptimizerConfig};
use crate::roc;
use crate::standardize::{affine_scores, Standardizer};

const PROB_FLOOR: f64 = 1e-15;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L1,
    L2,
}

/// Regularization on the inverse-strength scale: larger `c` means weaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub c: f64,
}

impl Penalty {
    /// Optimizer penalties equivalent to minimizing `c * sum(loss) + R(w)`
    /// with `R = |w|^2 / 2` or `|w|_1`, rescaled to a mean loss over `n` units.
    pub fn apply(&self, n: usize, base: &OptimizerConfig) -> OptimizerConfig {
        let scale = self.c * n.max(1) as f64;
        let mut cfg = base.clone();
        match self.kind {
            PenaltyKind::L2 => {
                cfg.l2_penalty = 1.0 / (2.0 * scale);
                cfg.l1_penalty = 0.0;
            }
            PenaltyKind::L1 => {
                cfg.l1_penalty = 1.0 / scale;
                cfg.l2_penalty = 0.0;
            }
        }
        cfg
    }
}

/// `{L2, L1} x {1e-3, 1e-2, 1e-1, 1, 10}`.
pub fn default_penalty_grid() -> Vec<Penalty> {
    let strengths = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
    [PenaltyKind::L2, PenaltyKind::L1]
        .iter()
        .flat_map(|&kind| strengths.iter().map(move |&c| Penalty { kind, c }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPlan {
    pub n_splits: usize,
    pub val_fraction: f64,
    pub penalty_grid: Vec<Penalty>,
    pub seed: u64,
}

impl Default for TuningPlan {
    fn default() -> Self {
        Self {
            n_splits: 20,
            val_fraction: 0.30,
            penalty_grid: default_penalty_grid(),
            seed: 0,
        }
    }
}

/// Optimizer used for outcome models unless overridden: Adam, full batch.
pub fn default_outcome_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        method: Method::AdaptiveMoment,
        learning_rate: 0.05,
        l2_penalty: 0.0,
        l1_penalty: 0.0,
        max_epochs: 300,
        batch_size: None,
        seed: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Random train/validation partitions, reproducible from `plan.seed`.
pub fn make_splits(n: usize, plan: &TuningPlan) -> Result<Vec<Split>> {
    random_splits(n, plan.n_splits, plan.val_fraction, plan.seed)
}

pub fn random_splits(n: usize, n_splits: usize, val_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if n_splits == 0 {
        return Err(Error::Config("n_splits must be positive".into()));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
    }
    let n_val = (val_fraction * n as f64).round() as usize;
    if n_val < 1 || n_val >= n {
        return Err(Error::Config(format!(
            "val_fraction {val_fraction} leaves an empty side on {n} units"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    Ok((0..n_splits)
        .map(|_| {
            perm.shuffle(&mut rng);
            let mut val = perm[..n_val].to_vec();
            let mut train = perm[n_val..].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            Split { train, val }
        })
        .collect())
}

/// Logistic model of `P(Y(a) = 1 | x)` over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub action: usize,
    pub label: String,
    /// `m` feature weights followed by the intercept.
    pub weights: Vec<f64>,
    pub standardizer: Standardizer,
    pub penalty: Option<Penalty>,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.dim()
    }

    /// Predicted effectiveness for one raw feature row.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let m = self.n_features();
        let mut s = self.weights[m];
        for j in 0..m {
            s += self.weights[j] * (x[j] - self.standardizer.mean[j]) / self.standardizer.sd[j];
        }
        sigmoid(s).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(s))` without overflow.
pub(crate) fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Predicted effectiveness for every row of `x`.
pub fn predict_effectiveness(model: &LogisticModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.n_features() {
        return Err(Error::Shape {
            expected: model.n_features(),
            found: x.cols(),
        });
    }
    Ok(exec::map_range(x.rows(), |i| model.predict_row(x.row(i))))
}

/// One fitted model per action, in action-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModels {
    pub models: Vec<LogisticModel>,
}

impl OutcomeModels {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.models.first().map_or(0, |m| m.n_features())
    }

    pub fn labels(&self) -> Vec<String> {
        self.models.iter().map(|m| m.label.clone()).collect()
    }

    /// Predicted effectiveness of every action for one row.
    pub fn predict_row(&self, x: &[f64], out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.models) {
            *o = m.predict_row(x);
        }
    }

    /// `n x K` matrix of predicted effectiveness.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features() {
            return Err(Error::Shape {
                expected: self.n_features(),
                found: x.cols(),
            });
        }
        let k = self.len();
        let rows = exec::map_range(x.rows(), |i| {
            let mut r = vec![0.0; k];
            self.predict_row(x.row(i), &mut r);
            r
        });
        Matrix::from_rows(&rows, k)
    }
}

/// Mean logistic loss over standardized rows.
struct LogisticObjective<'a> {
    z: &'a Matrix,
    labels: &'a [f64],
}

impl LogisticObjective<'_> {
    fn accumulate(&self, params: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let m = self.z.cols();
        let row = self.z.row(i);
        let mut s = [0.0];
        affine_scores(row, params, 1, &mut s);
        let s = s[0];
        let y = self.labels[i];
        let d = sigmoid(s) - y;
        for j in 0..m {
            grad[j] += d * row[j];
        }
        grad[m] += d;
        softplus(s) - y * s
    }
}

impl Objective for LogisticObjective<'_> {
    fn dim(&self) -> usize {
        self.z.cols() + 1
    }

    fn n_units(&self) -> usize {
        self.z.rows()
    }

    fn loss_grad(&self, params: &[f64], units: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (loss, count) = match units {
            Some(u) => {
                let mut l = 0.0;
                for &i in u {
                    l += self.accumulate(params, i, grad);
                }
                (l, u.len())
            }
            None => {
                let n = self.z.rows();
                let dim = self.dim();
                let parts = exec::map_chunks(n, CHUNK, |r| {
                    let mut g = vec![0.0; dim];
                    let mut l = 0.0;
                    for i in r {
                        l += self.accumulate(params, i, &mut g);
                    }
                    (l, g)
                });
                let mut l = 0.0;
                for (pl, pg) in parts {
                    l += pl;
                    for (a, b) in grad.iter_mut().zip(pg) {
                        *a += b;
                    }
                }
                (l, n)
            }
        };
        let inv = 1.0 / count.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        loss * inv
    }

    fn is_penalized(&self, index: usize) -> bool {
        index < self.z.cols()
    }
}

/// Fits one logistic model on `x` with the given optimizer settings.
pub fn fit_logistic(
    x: &Matrix,
    labels: &[f64],
    action: usize,
    label: &str,
    penalty: Option<Penalty>,
    opt: &OptimizerConfig,
) -> Result<LogisticModel> {
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let obj = LogisticObjective { z: &z, labels };
    let cfg = match penalty {
        Some(p) => p.apply(x.rows(), opt),
        None => opt.clone(),
    };
    let fit = minimize(&obj, vec![0.0; x.cols() + 1], &cfg, None)?;
    Ok(LogisticModel {
        action,
        label: label.to_string(),
        weights: fit.params,
        standardizer,
        penalty,
    })
}

/// Mean validation AUC of one penalty setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub action: usize,
    pub penalty: Penalty,
    pub mean_auc: Option<f64>,
    pub scored_splits: usize,
}

/// Final models plus everything produced while tuning them.
#[derive(Debug, Clone)]
pub struct TunedOutcomeModels {
    pub models: Arc<OutcomeModels>,
    pub splits: Vec<Split>,
    /// For each split, models refit on that split's training part with the selected penalty.
    pub split_models: Vec<Arc<OutcomeModels>>,
    pub records: Vec<TuningRecord>,
}

/// Fits one model per action with the penalty maximizing mean validation AUC.
pub fn fit_outcome_models(
    cohort: &Cohort,
    actions: &ActionSet,
    plan: &TuningPlan,
    opt: &OptimizerConfig,
) -> Result<OutcomeModels> {
    Ok(tune_outcome_models(cohort, actions, plan, opt)?
        .models
        .as_ref()
        .clone())
}

/// Tuning plus the per-split models reused by threshold search.
pub fn tune_outcome_models(
    cohort: &Cohort,
    actions: &ActionSet,
    plan: &TuningPlan,
    opt: &OptimizerConfig,
) -> Result<TunedOutcomeModels> {
    cohort.check_actions(actions)?;
    opt.validate()?;
    if plan.penalty_grid.is_empty() {
        return Err(Error::Config("penalty grid is empty".into()));
    }
    let k = actions.len();
    let labels: Vec<Vec<f64>> = (0..k).map(|a| cohort.y_column(a)).collect();
    for (a, col) in labels.iter().enumerate() {
        let pos = col.iter().filter(|v| **v > 0.5).count();
        if pos == 0 || pos == col.len() {
            return Err(Error::DegenerateOutcome(actions.label(a).to_string()));
        }
    }
    let splits = make_splits(cohort.n(), plan)?;
    let split_x: Vec<(Matrix, Matrix)> = splits
        .iter()
        .map(|s| (cohort.x().select_rows(&s.train), cohort.x().select_rows(&s.val)))
        .collect();

    let g = plan.penalty_grid.len();
    let s_count = splits.len();
    // task = ((a * G) + p) * S + s
    let fits = exec::map_range(k * g * s_count, |task| -> Result<(LogisticModel, Option<f64>)> {
        let s = task % s_count;
        let p = (task / s_count) % g;
        let a = task / (s_count * g);
        let split = &splits[s];
        let y_train: Vec<f64> = split.train.iter().map(|&i| labels[a][i]).collect();
        let model = fit_logistic(
            &split_x[s].0,
            &y_train,
            a,
            actions.label(a),
            Some(plan.penalty_grid[p]),
            opt,
        )?;
        let y_val: Vec<bool> = split.val.iter().map(|&i| labels[a][i] > 0.5).collect();
        let scores = predict_effectiveness(&model, &split_x[s].1)?;
        let auc = roc::auc(&scores, &y_val).ok();
        Ok((model, auc))
    });
    let fits: Vec<(LogisticModel, Option<f64>)> = fits.into_iter().collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(k * g);
    let mut chosen = vec![0usize; k];
    for a in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..g {
            let aucs: Vec<f64> = (0..s_count)
                .filter_map(|s| fits[(a * g + p) * s_count + s].1)
                .collect();
            let mean = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
            if let Some(v) = mean {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((p, v));
                }
            }
            records.push(TuningRecord {
                action: a,
                penalty: plan.penalty_grid[p],
                mean_auc: mean,
                scored_splits: aucs.len(),
            });
        }
        chosen[a] = best.map_or(0, |(p, _)| p);
    }

    let finals = exec::map_range(k, |a| {
        fit_logistic(
            cohort.x(),
            &labels[a],
            a,
            actions.label(a),
            Some(plan.penalty_grid[chosen[a]]),
            opt,
        )
    });
    let models = Arc::new(OutcomeModels {
        models: finals.into_iter().collect::<Result<_>>()?,
    });
    let split_models = (0..s_count)
        .map(|s| {
            Arc::new(OutcomeModels {
                models: (0..k)
                    .map(|a| fits[(a * g + chosen[a]) * s_count + s].0.clone())
                    .collect(),
            })
        })
        .collect();

    Ok(TunedOutcomeModels {
        models,
        splits,
        split_models,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::check_gradient;

    #[test]
    fn zero_and_intercept_only_models() {
        let mut m = LogisticModel {
            action: 0,
            label: "A".into(),
            weights: vec![0.0, 0.0, 0.0],
            standardizer: Standardizer::identity(2),
            penalty: None,
        };
        let x = Matrix::new(3, 2, vec![1.0, 2.0, -3.0, 0.5, 9.0, 9.0]).unwrap();
        assert!(predict_effectiveness(&m, &x).unwrap().iter().all(|p| *p == 0.5));
        m.weights[2] = 3f64.ln();
        for p in predict_effectiveness(&m, &x).unwrap() {
            assert!((p - 0.75).abs() < 1e-12);
        }
        assert!(predict_effectiveness(&m, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn prediction_is_monotone_in_positive_weight() {
        let m = LogisticModel {
            action: 0,
            label: "A".into(),
            weights: vec![0.8, -0.2],
            standardizer: Standardizer::identity(1),
            penalty: None,
        };
        let mut prev = 0.0;
        for v in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let p = m.predict_row(&[v]);
            assert!(p > prev && p < 1.0);
            prev = p;
        }
    }

    #[test]
    fn logistic_gradient_matches_differences() {
        let z = Matrix::new(4, 2, vec![0.1, -1.0, 2.0, 0.3, -0.7, 0.9, 1.1, 1.2]).unwrap();
        let labels = [1.0, 0.0, 1.0, 1.0];
        let obj = LogisticObjective { z: &z, labels: &labels };
        assert!(check_gradient(&obj, &[0.3, -0.4, 0.2], 1e-6) < 1e-6);
    }

    #[test]
    fn splits_are_reproducible_and_disjoint() {
        let plan = TuningPlan {
            n_splits: 3,
            ..TuningPlan::default()
        };
        let a = make_splits(50, &plan).unwrap();
        assert_eq!(a, make_splits(50, &plan).unwrap());
        for s in &a {
            assert_eq!(s.val.len(), 15);
            assert_eq!(s.train.len() + s.val.len(), 50);
            assert!(s.val.iter().all(|v| !s.train.contains(v)));
        }
        let bad = TuningPlan {
            val_fraction: 0.01,
            ..TuningPlan::default()
        };
        assert!(make_splits(10, &bad).is_err());
    }

    #[test]
    fn penalty_scaling() {
        let base = default_outcome_optimizer();
        let l2 = Penalty { kind: PenaltyKind::L2, c: 0.5 }.apply(100, &base);
        assert!((l2.l2_penalty - 0.01).abs() < 1e-15);
        assert_eq!(l2.l1_penalty, 0.0);
        let l1 = Penalty { kind: PenaltyKind::L1, c: 0.5 }.apply(100, &base);
        assert!((l1.l1_penalty - 0.02).abs() < 1e-15);
        assert_eq!(default_penalty_grid().len(), 10);
    }
}
