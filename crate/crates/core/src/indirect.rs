//! Policies derived from per-action outcome models: thresholding with an
//! exhaustive grid search under cost budgets, and expected-reward argmax.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::exec;
use crate::outcome::{OutcomeModels, TunedOutcomeModels};
use crate::policy::Policy;
use crate::roc::{roc_points, threshold_for_fnr};

const COST_SLACK: f64 = 1e-12;
const SCORE_TIE: f64 = 1e-12;

/// Predict-then-choose-cheapest policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub models: Arc<OutcomeModels>,
    pub thresholds: Vec<f64>,
    pub actions: ActionSet,
    pub default_action: usize,
    /// FNR level per action that produced each threshold, when known.
    #[serde(default)]
    pub fnr_levels: Option<Vec<f64>>,
}

impl ThresholdPolicy {
    pub fn new(
        models: Arc<OutcomeModels>,
        thresholds: Vec<f64>,
        actions: ActionSet,
        default_action: usize,
    ) -> Result<Self> {
        if thresholds.len() != actions.len() || models.len() != actions.len() {
            return Err(Error::Config("one threshold and one model per action required".into()));
        }
        if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("thresholds must lie in [0, 1]".into()));
        }
        if default_action >= actions.len() || actions.cost(default_action) > actions.cost(actions.cheapest()) {
            return Err(Error::Config("default action must be a minimum-cost action".into()));
        }
        Ok(Self {
            models,
            thresholds,
            actions,
            default_action,
            fnr_levels: None,
        })
    }

    /// Decision from already-computed effectiveness predictions.
    pub fn decide_from_predictions(&self, preds: &[f64]) -> usize {
        threshold_choice(preds, &self.thresholds, &self.actions.costs(), self.default_action)
    }
}

/// Lowest-cost action predicted effective (`pred >= threshold`), else `default`.
pub fn threshold_choice(preds: &[f64], thresholds: &[f64], costs: &[f64], default: usize) -> usize {
    let mut best: Option<usize> = None;
    for a in 0..preds.len() {
        if preds[a] >= thresholds[a] && best.is_none_or(|b| costs[a] < costs[b]) {
            best = Some(a);
        }
    }
    best.unwrap_or(default)
}

impl Policy for ThresholdPolicy {
    fn n_features(&self) -> usize {
        self.models.n_features()
    }

    fn n_choices(&self) -> usize {
        self.actions.len()
    }

    fn decide(&self, x: &[f64]) -> usize {
        let mut preds = vec![0.0; self.actions.len()];
        self.models.predict_row(x, &mut preds);
        self.decide_from_predictions(&preds)
    }
}

/// Expected-reward argmax over predicted effectiveness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMaxPolicy {
    pub models: Arc<OutcomeModels>,
    pub omega: f64,
    pub actions: ActionSet,
}

impl RewardMaxPolicy {
    pub fn decide_from_predictions(&self, preds: &[f64]) -> usize {
        reward_max_choice(preds, self.omega, &self.actions.costs())
    }
}

/// `argmax_a omega * f_a + (1 - omega) * (1 - C(a))`.
pub fn reward_max_choice(preds: &[f64], omega: f64, costs: &[f64]) -> usize {
    let scores: Vec<f64> = preds
        .iter()
        .zip(costs)
        .map(|(f, c)| omega * f + (1.0 - omega) * (1.0 - c))
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // scores equal up to rounding count as ties
    scores.iter().position(|&s| s >= best - SCORE_TIE).unwrap_or(0)
}

impl Policy for RewardMaxPolicy {
    fn n_features(&self) -> usize {
        self.models.n_features()
    }

    fn n_choices(&self) -> usize {
        self.actions.len()
    }

    fn decide(&self, x: &[f64]) -> usize {
        let mut preds = vec![0.0; self.actions.len()];
        self.models.predict_row(x, &mut preds);
        self.decide_from_predictions(&preds)
    }
}

/// `[0.85, 1.0]` in steps of 0.005.
pub fn default_omega_grid() -> Vec<f64> {
    (0..=30).map(|i| round6(0.85 + 0.005 * i as f64)).collect()
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Sorts and deduplicates a grid of values in `[0, 1]`.
pub fn normalize_unit_grid(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Config(format!("{what} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("{what} value {v} outside [0, 1]")));
    }
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// One reward-max policy per distinct omega, ascending.
pub fn sweep_omega(
    models: &Arc<OutcomeModels>,
    omegas: &[f64],
    actions: &ActionSet,
) -> Result<Vec<RewardMaxPolicy>> {
    Ok(normalize_unit_grid(omegas, "omega")?
        .into_iter()
        .map(|omega| RewardMaxPolicy {
            models: Arc::clone(models),
            omega,
            actions: actions.clone(),
        })
        .collect())
}

/// Target FNR levels and groups of actions forced to share a level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub fnr_levels: Vec<f64>,
    #[serde(default)]
    pub tie_groups: Vec<Vec<usize>>,
}

impl ThresholdGrid {
    /// Eleven evenly spaced levels `0.0, 0.1, ..., 1.0`.
    pub fn with_default_levels(tie_groups: Vec<Vec<usize>>) -> Self {
        Self {
            fnr_levels: (0..=10).map(|i| i as f64 / 10.0).collect(),
            tie_groups,
        }
    }

    /// Partition of `0..k` into level-sharing groups, ordered by first member.
    pub fn groups(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let mut owner = vec![None; k];
        for (g, members) in self.tie_groups.iter().enumerate() {
            for &a in members {
                if a >= k {
                    return Err(Error::Config(format!("tie group references action {a} of {k}")));
                }
                if owner[a].replace(g).is_some() {
                    return Err(Error::Config(format!("action {a} appears in two tie groups")));
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut seen = vec![false; self.tie_groups.len()];
        for a in 0..k {
            match owner[a] {
                None => groups.push(vec![a]),
                Some(g) if !seen[g] => {
                    seen[g] = true;
                    let mut members = self.tie_groups[g].clone();
                    members.sort_unstable();
                    members.dedup();
                    groups.push(members);
                }
                Some(_) => {}
            }
        }
        Ok(groups)
    }

    /// Number of level combinations.
    pub fn cardinality(&self, k: usize) -> Result<usize> {
        Ok(self.fnr_levels.len().pow(self.groups(k)?.len() as u32))
    }

    fn validate(&self) -> Result<()> {
        if self.fnr_levels.is_empty() {
            return Err(Error::Config("fnr_levels is empty".into()));
        }
        if self.fnr_levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("fnr_levels must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Sorted, unique cost budgets in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BudgetGrid(Vec<f64>);

impl BudgetGrid {
    pub fn new(mut budgets: Vec<f64>) -> Result<Self> {
        if budgets.is_empty() {
            return Err(Error::Config("budget grid is empty".into()));
        }
        if budgets.iter().any(|b| !(*b >= 0.0 && *b <= 1.0)) {
            return Err(Error::Config("budgets must lie in [0, 1]".into()));
        }
        budgets.sort_by(f64::total_cmp);
        budgets.dedup();
        Ok(Self(budgets))
    }

    /// 0.01 to 0.05 by 0.01, then 0.075 to 1.0 by 0.025.
    pub fn default_grid() -> Self {
        let mut b: Vec<f64> = (1..=5).map(|i| round6(0.01 * i as f64)).collect();
        b.extend((1..=38).map(|i| round6(0.05 + 0.025 * i as f64)));
        Self(b)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One validation set together with the models and per-level thresholds used on it.
#[derive(Debug, Clone)]
pub struct ThresholdFold {
    pub models: Arc<OutcomeModels>,
    /// `thresholds[a][l]` for action `a` at FNR level `l`.
    pub thresholds: Vec<Vec<f64>>,
    pub validation: Cohort,
}

/// Per-action thresholds hitting each FNR level on `source`'s predictions.
pub fn level_thresholds(models: &OutcomeModels, source: &Cohort, levels: &[f64]) -> Result<Vec<Vec<f64>>> {
    let preds = models.predict(source.x())?;
    (0..models.len())
        .map(|a| {
            let scores: Vec<f64> = (0..source.n()).map(|i| preds.get(i, a)).collect();
            let labels: Vec<bool> = (0..source.n()).map(|i| source.y(i, a) == 1).collect();
            let roc = roc_points(&scores, &labels)
                .map_err(|_| Error::DegenerateOutcome(models.models[a].label.clone()))?;
            Ok(levels
                .iter()
                .map(|&l| threshold_for_fnr(&roc, l).clamp(0.0, 1.0))
                .collect())
        })
        .collect()
}

impl ThresholdFold {
    pub fn new(models: Arc<OutcomeModels>, threshold_source: &Cohort, validation: Cohort, levels: &[f64]) -> Result<Self> {
        let thresholds = level_thresholds(&models, threshold_source, levels)?;
        Ok(Self {
            models,
            thresholds,
            validation,
        })
    }
}

/// Mean validation benefit and cost of one level combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboScore {
    /// Level index per action.
    pub levels: Vec<usize>,
    pub benefit: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetChoice {
    pub budget: f64,
    /// `None` when no combination fit the budget and the all-default policy was used.
    pub combo: Option<usize>,
    pub benefit: f64,
    pub cost: f64,
    pub policy: ThresholdPolicy,
}

#[derive(Debug, Clone)]
pub struct ThresholdSearch {
    pub combos: Vec<ComboScore>,
    pub choices: Vec<BudgetChoice>,
}

/// Level index per action for lexicographic combination `index`.
fn decode_combo(mut index: usize, groups: &[Vec<usize>], n_levels: usize, k: usize) -> Vec<usize> {
    let mut levels = vec![0; k];
    for g in groups.iter().rev() {
        let l = index % n_levels;
        index /= n_levels;
        for &a in g {
            levels[a] = l;
        }
    }
    levels
}

/// Exhaustive threshold search averaged over validation folds.
///
/// For each budget returns the combination with the highest mean benefit among
/// those whose mean cost stays within the budget; ties go to the smallest
/// lexicographic combination index. The returned policies use `final_models`
/// with `final_thresholds` at the selected levels.
pub fn search_thresholds_folds(
    folds: &[ThresholdFold],
    final_models: &Arc<OutcomeModels>,
    final_thresholds: &[Vec<f64>],
    grid: &ThresholdGrid,
    budgets: &BudgetGrid,
    actions: &ActionSet,
    default_action: usize,
) -> Result<ThresholdSearch> {
    grid.validate()?;
    if folds.is_empty() {
        return Err(Error::Config("threshold search needs at least one validation fold".into()));
    }
    let k = actions.len();
    let n_levels = grid.fnr_levels.len();
    let groups = grid.groups(k)?;
    let n_combos = grid.cardinality(k)?;
    let costs = actions.costs();

    // cheapest first; stable so equal costs keep action order
    let mut cost_order: Vec<usize> = (0..k).collect();
    cost_order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));

    // effective[f][a][l] = bitmap over validation units
    let effective: Vec<Vec<Vec<Vec<bool>>>> = folds
        .iter()
        .map(|fold| -> Result<_> {
            fold.validation.check_actions(actions)?;
            let preds = fold.models.predict(fold.validation.x())?;
            Ok((0..k)
                .map(|a| {
                    (0..n_levels)
                        .map(|l| {
                            let t = fold.thresholds[a][l];
                            (0..fold.validation.n()).map(|i| preds.get(i, a) >= t).collect()
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let combos = exec::map_range(n_combos, |c| {
        let levels = decode_combo(c, &groups, n_levels, k);
        let (mut benefit, mut cost) = (0.0, 0.0);
        for (f, fold) in folds.iter().enumerate() {
            let v = &fold.validation;
            let (mut b, mut cs) = (0u64, 0.0);
            for i in 0..v.n() {
                let a = cost_order
                    .iter()
                    .copied()
                    .find(|&a| effective[f][a][levels[a]][i])
                    .unwrap_or(default_action);
                b += u64::from(v.y(i, a));
                cs += costs[a];
            }
            let n = v.n().max(1) as f64;
            benefit += b as f64 / n;
            cost += cs / n;
        }
        let nf = folds.len() as f64;
        ComboScore {
            levels,
            benefit: benefit / nf,
            cost: cost / nf,
        }
    });

    let default_benefit = folds
        .iter()
        .map(|f| (0..f.validation.n()).map(|i| f64::from(f.validation.y(i, default_action))).sum::<f64>() / f.validation.n().max(1) as f64)
        .sum::<f64>()
        / folds.len() as f64;

    let mut choices = Vec::with_capacity(budgets.values().len());
    for &b in budgets.values() {
        let mut best: Option<usize> = None;
        for (c, s) in combos.iter().enumerate() {
            if s.cost <= b + COST_SLACK && best.is_none_or(|bi| s.benefit > combos[bi].benefit) {
                best = Some(c);
            }
        }
        let choice = match best {
            Some(c) => {
                let s = &combos[c];
                let thresholds: Vec<f64> = (0..k).map(|a| final_thresholds[a][s.levels[a]]).collect();
                let mut policy =
                    ThresholdPolicy::new(Arc::clone(final_models), thresholds, actions.clone(), default_action)?;
                policy.fnr_levels = Some(s.levels.iter().map(|&l| grid.fnr_levels[l]).collect());
                BudgetChoice {
                    budget: b,
                    combo: Some(c),
                    benefit: s.benefit,
                    cost: s.cost,
                    policy,
                }
            }
            None => BudgetChoice {
                budget: b,
                combo: None,
                benefit: default_benefit,
                cost: costs[default_action],
                policy: ThresholdPolicy::new(Arc::clone(final_models), vec![1.0; k], actions.clone(), default_action)?,
            },
        };
        choices.push(choice);
    }
    Ok(ThresholdSearch { combos, choices })
}

/// Single-validation-set search; thresholds come from `threshold_source` predictions.
pub fn search_thresholds(
    models: &Arc<OutcomeModels>,
    threshold_source: &Cohort,
    grid: &ThresholdGrid,
    validation: &Cohort,
    budgets: &BudgetGrid,
    actions: &ActionSet,
    default_action: usize,
) -> Result<ThresholdSearch> {
    let fold = ThresholdFold::new(Arc::clone(models), threshold_source, validation.clone(), &grid.fnr_levels)?;
    let thresholds = fold.thresholds.clone();
    search_thresholds_folds(&[fold], models, &thresholds, grid, budgets, actions, default_action)
}

/// Search averaged over the tuning splits: each split's models are scored on
/// its validation part, with thresholds taken from its training part.
pub fn search_thresholds_cv(
    tuned: &TunedOutcomeModels,
    cohort: &Cohort,
    grid: &ThresholdGrid,
    budgets: &BudgetGrid,
    actions: &ActionSet,
    default_action: usize,
) -> Result<ThresholdSearch> {
    let folds: Vec<ThresholdFold> = tuned
        .splits
        .iter()
        .zip(&tuned.split_models)
        .map(|(s, m)| {
            ThresholdFold::new(
                Arc::clone(m),
                &cohort.subset(&s.train),
                cohort.subset(&s.val),
                &grid.fnr_levels,
            )
        })
        .collect::<Result<_>>()?;
    let final_thresholds = level_thresholds(&tuned.models, cohort, &grid.fnr_levels)?;
    search_thresholds_folds(&folds, &tuned.models, &final_thresholds, grid, budgets, actions, default_action)
}
