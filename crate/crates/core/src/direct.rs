//! Direct policy learning: linear scores trained with the reward-weighted
//! multinomial deviance (negative log-softmax) surrogate.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::actions::{argmax, argmin, ActionSet};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::exec;
use crate::matrix::Matrix;
use crate::optim::{minimize, EarlyStop, EarlyStopRule, Objective, OptimizerConfig};
use crate::outcome::{random_splits, PenaltyKind};
use crate::policy::Policy;
use crate::reward::{build_rewards, RewardSpec, RewardTable};
use crate::standardize::{affine_scores, Standardizer};

const CHUNK: usize = 1024;

/// How scores become decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreRule {
    /// Trained on rewards: pick the highest score.
    #[default]
    Argmax,
    /// Trained on regrets: pick the lowest score.
    Argmin,
}

/// Linear score policy over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    /// Row-major `(m + 1) x n_choices` weights; the last row is the intercept.
    pub theta: Vec<f64>,
    pub n_features: usize,
    pub n_choices: usize,
    pub actions: ActionSet,
    pub has_defer: bool,
    pub standardizer: Standardizer,
    #[serde(default)]
    pub rule: ScoreRule,
    pub omega: f64,
    pub lambda_defer: f64,
    pub seed: u64,
}

impl LinearPolicy {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n_features];
        self.standardizer.transform_into(x, &mut z);
        let mut s = vec![0.0; self.n_choices];
        affine_scores(&z, &self.theta, self.n_choices, &mut s);
        s
    }

    /// Softmax of the scores for one raw feature row.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x))
    }

    /// Weight difference between two columns over standardized features (intercept excluded).
    pub fn coefficient_differences(&self, a: usize, b: usize) -> Vec<f64> {
        let k = self.n_choices;
        (0..self.n_features)
            .map(|j| self.theta[j * k + a] - self.theta[j * k + b])
            .collect()
    }
}

impl Policy for LinearPolicy {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_choices(&self) -> usize {
        self.n_choices
    }

    fn defer_index(&self) -> Option<usize> {
        self.has_defer.then_some(self.actions.len())
    }

    fn decide(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        // defer is the last column, so canonical ties favour acting
        match self.rule {
            ScoreRule::Argmax => argmax(&s),
            ScoreRule::Argmin => argmin(&s),
        }
    }
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Mean deviance loss `sum_a r(a) * (logsumexp(f) - f_a)` over units.
pub struct SurrogateObjective<'a> {
    z: &'a Matrix,
    reward: &'a RewardTable,
}

impl<'a> SurrogateObjective<'a> {
    /// `z` is the (already standardized) feature matrix; an intercept is implicit.
    pub fn new(z: &'a Matrix, reward: &'a RewardTable) -> Result<Self> {
        check_nonnegative(reward)?;
        Self::new_unchecked(z, reward)
    }

    fn new_unchecked(z: &'a Matrix, reward: &'a RewardTable) -> Result<Self> {
        if z.rows() != reward.n() {
            return Err(Error::Schema(format!(
                "{} feature rows but {} reward rows",
                z.rows(),
                reward.n()
            )));
        }
        Ok(Self { z, reward })
    }

    fn k(&self) -> usize {
        self.reward.n_columns()
    }

    fn accumulate(&self, params: &[f64], i: usize, scores: &mut [f64], grad: &mut [f64]) -> f64 {
        let r = self.reward.row(i);
        let total: f64 = r.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let k = self.k();
        let z = self.z.row(i);
        affine_scores(z, params, k, scores);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for s in scores.iter() {
            sum += (s - max).exp();
        }
        let lse = max + sum.ln();
        let mut loss = 0.0;
        let m = z.len();
        for a in 0..k {
            loss += r[a] * (lse - scores[a]);
            let g = (scores[a] - lse).exp() * total - r[a];
            for j in 0..m {
                grad[j * k + a] += z[j] * g;
            }
            grad[m * k + a] += g;
        }
        loss
    }
}

impl Objective for SurrogateObjective<'_> {
    fn dim(&self) -> usize {
        (self.z.cols() + 1) * self.k()
    }

    fn n_units(&self) -> usize {
        self.z.rows()
    }

    fn loss_grad(&self, params: &[f64], units: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let k = self.k();
        let (loss, count) = match units {
            Some(u) => {
                let mut s = vec![0.0; k];
                let mut l = 0.0;
                for &i in u {
                    l += self.accumulate(params, i, &mut s, grad);
                }
                (l, u.len())
            }
            None => {
                let n = self.z.rows();
                let dim = self.dim();
                let parts = exec::map_chunks(n, CHUNK, |range| {
                    let mut g = vec![0.0; dim];
                    let mut s = vec![0.0; k];
                    let mut l = 0.0;
                    for i in range {
                        l += self.accumulate(params, i, &mut s, &mut g);
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
        index < self.z.cols() * self.k()
    }
}

fn check_nonnegative(reward: &RewardTable) -> Result<()> {
    for i in 0..reward.n() {
        for (j, &v) in reward.row(i).iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::NegativeReward {
                    unit: i,
                    column: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Surrogate loss and gradient at `theta` for features `x` (intercept implicit),
/// with `l2_penalty * |theta|^2` over the non-intercept rows.
pub fn surrogate_loss_and_grad(
    theta: &[f64],
    x: &Matrix,
    reward: &RewardTable,
    l2_penalty: f64,
) -> Result<(f64, Vec<f64>)> {
    let obj = SurrogateObjective::new(x, reward)?;
    if theta.len() != obj.dim() {
        return Err(Error::Config(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            obj.dim()
        )));
    }
    let pen = crate::optim::Penalized::new(&obj, l2_penalty, 0.0);
    let mut grad = vec![0.0; obj.dim()];
    let loss = pen.loss_grad(theta, None, &mut grad);
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    pub reward: RewardSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub early_stop: Option<EarlyStopRule>,
    /// Train on `max(r) - r` and decide by argmin.
    #[serde(default)]
    pub regret_transform: bool,
}

/// Mean realized reward of `policy` on a reward table built for the same rows.
pub fn mean_realized_reward(policy: &LinearPolicy, x: &Matrix, reward: &RewardTable) -> f64 {
    let n = x.rows();
    if n == 0 {
        return 0.0;
    }
    let parts = exec::map_chunks(n, CHUNK, |range| {
        range.map(|i| reward.row(i)[policy.decide(x.row(i))]).sum::<f64>()
    });
    parts.into_iter().sum::<f64>() / n as f64
}

/// Trains a linear policy, optionally early-stopping on validation mean reward.
pub fn train_direct(
    train: &Cohort,
    actions: &ActionSet,
    config: &DirectConfig,
    validation: Option<&Cohort>,
) -> Result<LinearPolicy> {
    let reward = build_rewards(train, actions, &config.reward)?;
    let target = if config.regret_transform {
        reward.regrets()
    } else {
        reward.clone()
    };
    let standardizer = Standardizer::fit(train.x());
    let z = standardizer.transform(train.x());
    let obj = SurrogateObjective::new(&z, &target)?;
    let k = reward.n_columns();
    let m = train.m();

    let mut policy = LinearPolicy {
        theta: vec![0.0; (m + 1) * k],
        n_features: m,
        n_choices: k,
        actions: actions.clone(),
        has_defer: reward.has_defer(),
        standardizer,
        rule: if config.regret_transform {
            ScoreRule::Argmin
        } else {
            ScoreRule::Argmax
        },
        omega: config.reward.omega,
        lambda_defer: config.reward.lambda_defer,
        seed: config.optimizer.seed,
    };

    let fit = match (config.early_stop, validation) {
        (Some(rule), Some(val)) => {
            let val_reward = build_rewards(val, actions, &config.reward)?;
            let mut probe = policy.clone();
            let mut evaluate = |theta: &[f64]| {
                probe.theta.copy_from_slice(theta);
                mean_realized_reward(&probe, val.x(), &val_reward)
            };
            minimize(
                &obj,
                policy.theta.clone(),
                &config.optimizer,
                Some(EarlyStop {
                    rule,
                    evaluate: &mut evaluate,
                }),
            )?
        }
        (Some(_), None) => {
            return Err(Error::Config("early stopping needs a validation cohort".into()));
        }
        (None, _) => minimize(&obj, policy.theta.clone(), &config.optimizer, None)?,
    };
    policy.theta = fit.params;
    Ok(policy)
}

/// Raw penalty strength applied to the mean surrogate loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectPenalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl DirectPenalty {
    pub fn apply(&self, base: &OptimizerConfig) -> OptimizerConfig {
        let mut cfg = base.clone();
        match self.kind {
            PenaltyKind::L1 => {
                cfg.l1_penalty = self.lambda;
                cfg.l2_penalty = 0.0;
            }
            PenaltyKind::L2 => {
                cfg.l2_penalty = self.lambda;
                cfg.l1_penalty = 0.0;
            }
        }
        cfg
    }
}

/// Held-out selection of the direct learner's penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectTuning {
    pub n_splits: usize,
    pub val_fraction: f64,
    pub penalty_grid: Vec<DirectPenalty>,
    pub seed: u64,
}

impl Default for DirectTuning {
    fn default() -> Self {
        let l1 = [1e-3, 3e-3, 1e-2, 3e-2].map(|lambda| DirectPenalty {
            kind: PenaltyKind::L1,
            lambda,
        });
        let l2 = [1e-3, 1e-2, 1e-1].map(|lambda| DirectPenalty {
            kind: PenaltyKind::L2,
            lambda,
        });
        Self {
            n_splits: 5,
            val_fraction: 0.3,
            penalty_grid: l1.into_iter().chain(l2).collect(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectTuningRecord {
    pub penalty: DirectPenalty,
    pub mean_val_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedDirect {
    pub policy: LinearPolicy,
    pub chosen: DirectPenalty,
    pub records: Vec<DirectTuningRecord>,
}

/// Picks the penalty with the best mean validation reward over random
/// splits of `train`, then refits on all of `train`.
///
/// Early stopping in `config` is ignored while scoring candidates.
pub fn tune_direct(
    train: &Cohort,
    actions: &ActionSet,
    config: &DirectConfig,
    tuning: &DirectTuning,
) -> Result<TunedDirect> {
    if tuning.penalty_grid.is_empty() {
        return Err(Error::Config("direct penalty grid is empty".into()));
    }
    if tuning.penalty_grid.iter().any(|p| !(p.lambda.is_finite() && p.lambda >= 0.0)) {
        return Err(Error::Config("penalty strengths must be finite and nonnegative".into()));
    }
    let splits = random_splits(train.n(), tuning.n_splits, tuning.val_fraction, tuning.seed)?;
    let g = tuning.penalty_grid.len();
    let s_count = splits.len();
    let cohorts: Vec<(Cohort, Cohort)> = splits
        .iter()
        .map(|s| (train.subset(&s.train), train.subset(&s.val)))
        .collect();
    let scores = exec::map_range(g * s_count, |task| -> Result<f64> {
        let (p, s) = (task / s_count, task % s_count);
        let mut cfg = config.clone();
        cfg.early_stop = None;
        cfg.optimizer = tuning.penalty_grid[p].apply(&config.optimizer);
        let policy = train_direct(&cohorts[s].0, actions, &cfg, None)?;
        let val = &cohorts[s].1;
        let reward = build_rewards(val, actions, &config.reward)?;
        Ok(mean_realized_reward(&policy, val.x(), &reward))
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    let records: Vec<DirectTuningRecord> = (0..g)
        .map(|p| DirectTuningRecord {
            penalty: tuning.penalty_grid[p],
            mean_val_reward: scores[p * s_count..(p + 1) * s_count].iter().sum::<f64>() / s_count as f64,
        })
        .collect();
    let best = records
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.mean_val_reward > records[b].mean_val_reward { i } else { b });
    let chosen = tuning.penalty_grid[best];
    let mut cfg = config.clone();
    cfg.optimizer = chosen.apply(&config.optimizer);
    let policy = if cfg.early_stop.is_some() {
        // early stopping needs its own held-out part; use the first split
        train_direct(&cohorts[0].0, actions, &cfg, Some(&cohorts[0].1))?
    } else {
        train_direct(train, actions, &cfg, None)?
    };
    Ok(TunedDirect {
        policy,
        chosen,
        records,
    })
}

/// Largest gap between the policy's softmax and the normalized per-context
/// mean rewards, over contexts that repeat in `x` and have positive total reward.
pub fn calibration_probe(policy: &LinearPolicy, x: &Matrix, reward: &RewardTable) -> Result<f64> {
    if x.rows() != reward.n() {
        return Err(Error::Schema("feature and reward rows differ".into()));
    }
    if reward.n_columns() != policy.n_choices {
        return Err(Error::Schema("reward columns do not match policy choices".into()));
    }
    let k = reward.n_columns();
    let mut groups: HashMap<Vec<u64>, (usize, Vec<f64>, usize)> = HashMap::new();
    for i in 0..x.rows() {
        let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
        let entry = groups.entry(key).or_insert_with(|| (i, vec![0.0; k], 0));
        for (acc, r) in entry.1.iter_mut().zip(reward.row(i)) {
            *acc += r;
        }
        entry.2 += 1;
    }
    if groups.values().all(|g| g.2 < 2) {
        return Err(Error::NotApplicable(
            "features have no repeated contexts to group by".into(),
        ));
    }
    let mut worst = 0.0f64;
    for (first, sums, _) in groups.values() {
        let total: f64 = sums.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let p = policy.probabilities(x.row(*first));
        for a in 0..k {
            worst = worst.max((p[a] - sums[a] / total).abs());
        }
    }
    Ok(worst)
}

/// Checks `t L(a) + (1 - t) L(b) >= L(t a + (1 - t) b)` at random parameter
/// pairs, penalty off, within `1e-10`. Rewards are not sign-checked here.
pub fn convexity_probe(x: &Matrix, reward: &RewardTable, trials: usize, seed: u64) -> bool {
    const SLACK: f64 = 1e-10;
    let Ok(obj) = SurrogateObjective::new_unchecked(x, reward) else {
        return false;
    };
    let dim = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let t: f64 = rng.random();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| t * u + (1.0 - t) * v).collect();
        let lhs = t * obj.loss(&a) + (1.0 - t) * obj.loss(&b);
        if lhs < obj.loss(&mix) - SLACK {
            return false;
        }
    }
    true
}
